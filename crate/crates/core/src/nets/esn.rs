//! Ego-agent Social Network.
//!
//! ```text
//! F_cond   = [E_future(Σ ped centers | Σ ped endpoints) | E_goal(goal) | E_nxt(ego_next)]   20
//! F_global = [F_cond | E_traj(true future)]                                              36  (train)
//! z        ~ E_latent(F_global)                                                          16
//! raw      = D_latent([F_cond | z])                                                      70
//! ```

use rand::Rng;

use super::{decode_zonotopes, flatten, slot, Mode, NetStack, StackGrads, ZonoSeq, HORIZON, LATENT_DIM, N_STEPS};
use crate::error::{check_len, Error, Result};
use crate::nn::{sample_latent, sample_latent_backward, GaussianLatent, GradTape, NamedNets};
use crate::zono::Vec2;

const E_GOAL: usize = 0;
const E_FUTURE: usize = 1;
const E_NXT: usize = 2;
const E_TRAJ: usize = 3;
const E_LATENT: usize = 4;
const D_LATENT: usize = 5;

const NAMES: &[&str] = &["E_goal", "E_future", "E_nxt", "E_traj", "E_latent", "D_latent"];
const DIMS: &[&[usize]] = &[
    &[2, 8, 16, 2],
    &[16, 64, 32, 16],
    &[2, 64, 32, 2],
    &[16, 64, 32, 16],
    &[36, 8, 50, 32],
    &[36, 128, 64, 128, 70],
];
const COND: usize = 20;

/// Neighbor predictions summed over every observed pedestrian: seven
/// centers followed by the predicted endpoint, 16 numbers in total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrowdSummary(pub [f64; 16]);

impl CrowdSummary {
    pub fn empty() -> Self {
        Self([0.0; 16])
    }

    pub fn add(&mut self, centers: &[Vec2], endpoint: Vec2) {
        assert_eq!(centers.len(), N_STEPS);
        for (i, c) in centers.iter().enumerate() {
            self.0[2 * i] += c.x;
            self.0[2 * i + 1] += c.y;
        }
        self.0[14] += endpoint.x;
        self.0[15] += endpoint.y;
    }
}

impl Default for CrowdSummary {
    fn default() -> Self {
        Self::empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Esn {
    stack: NetStack,
}

#[derive(Debug, Clone)]
pub struct EsnPass {
    pub zonos: ZonoSeq,
    pub latent: GaussianLatent,
    pub raw: Vec<f64>,
    mode: Mode,
    noise: Vec<f64>,
    t_goal: GradTape,
    t_future: GradTape,
    t_nxt: GradTape,
    t_traj: Option<GradTape>,
    t_latent: Option<GradTape>,
    t_dlat: GradTape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsnInputGrads {
    pub crowd: [f64; 16],
    pub goal: Vec2,
    pub ego_next: Vec2,
}

impl Esn {
    pub const MODEL: &'static str = "ESN";

    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            stack: NetStack::new(Self::MODEL, NAMES, DIMS, rng),
        }
    }

    pub fn from_named(named: &NamedNets) -> Result<Self> {
        Ok(Self {
            stack: NetStack::from_named(Self::MODEL, NAMES, DIMS, named)?,
        })
    }

    pub fn stack(&self) -> &NetStack {
        &self.stack
    }

    pub fn stack_mut(&mut self) -> &mut NetStack {
        &mut self.stack
    }

    pub fn forward(
        &self,
        crowd: &CrowdSummary,
        goal: Vec2,
        ego_next: Vec2,
        truth_future: Option<&[Vec2]>,
        mode: Mode,
        noise: Option<&[f64]>,
    ) -> Result<EsnPass> {
        let noise = noise.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; LATENT_DIM]);
        check_len("esn noise", LATENT_DIM, noise.len())?;
        let s = &self.stack;

        let (f_fut, t_future) = s.net(E_FUTURE).forward(&crowd.0)?;
        let (f_goal, t_goal) = s.net(E_GOAL).forward(goal.as_slice())?;
        let (f_nxt, t_nxt) = s.net(E_NXT).forward(ego_next.as_slice())?;
        let cond: Vec<f64> = f_fut.into_iter().chain(f_goal).chain(f_nxt).collect();

        let (latent, z, t_traj, t_latent) = match mode {
            Mode::Train => {
                let truth = truth_future.ok_or(Error::MissingTruth("ego future"))?;
                check_len("esn truth future", HORIZON, truth.len())?;
                let (f_traj, t_traj) = s.net(E_TRAJ).forward(&flatten(truth))?;
                let global: Vec<f64> = cond.iter().copied().chain(f_traj).collect();
                let (head, t_lat) = s.net(E_LATENT).forward(&global)?;
                let gl = GaussianLatent::from_head(&head)?;
                let z = sample_latent(&gl, &noise)?;
                (gl, z, Some(t_traj), Some(t_lat))
            }
            Mode::Infer => {
                let gl = GaussianLatent::from_head(&[0.0; 2 * LATENT_DIM])?;
                let z = sample_latent(&gl, &noise)?;
                (gl, z, None, None)
            }
        };

        let dlat_in: Vec<f64> = cond.into_iter().chain(z).collect();
        let (raw, t_dlat) = s.net(D_LATENT).forward(&dlat_in)?;
        let zonos = decode_zonotopes(&raw)?;
        Ok(EsnPass {
            zonos,
            latent,
            raw,
            mode,
            noise,
            t_goal,
            t_future,
            t_nxt,
            t_traj,
            t_latent,
            t_dlat,
        })
    }

    pub fn backward(
        &self,
        pass: &EsnPass,
        d_raw: &[f64],
        d_latent: Option<(&[f64], &[f64])>,
        mut grads: Option<&mut StackGrads>,
    ) -> Result<EsnInputGrads> {
        let s = &self.stack;
        let d_dlat = s.net(D_LATENT).backward(&pass.t_dlat, d_raw, slot(&mut grads, D_LATENT))?;
        let mut d_cond = d_dlat[..COND].to_vec();
        let d_z = &d_dlat[COND..];

        if pass.mode == Mode::Train {
            let (mut d_mu, mut d_lv) = sample_latent_backward(&pass.latent, &pass.noise, d_z);
            if let Some((gm, gl)) = d_latent {
                d_mu.iter_mut().zip(gm).for_each(|(a, b)| *a += b);
                d_lv.iter_mut().zip(gl).for_each(|(a, b)| *a += b);
            }
            let head = pass.latent.head_grad(&d_mu, &d_lv);
            let t_lat = pass.t_latent.as_ref().expect("train pass has latent tape");
            let d_global = s.net(E_LATENT).backward(t_lat, &head, slot(&mut grads, E_LATENT))?;
            d_cond.iter_mut().zip(&d_global[..COND]).for_each(|(a, b)| *a += b);
            let t_traj = pass.t_traj.as_ref().expect("train pass has trajectory tape");
            s.net(E_TRAJ).backward(t_traj, &d_global[COND..], slot(&mut grads, E_TRAJ))?;
        }

        let crowd = s.net(E_FUTURE).backward(&pass.t_future, &d_cond[..16], slot(&mut grads, E_FUTURE))?;
        let goal = s.net(E_GOAL).backward(&pass.t_goal, &d_cond[16..18], slot(&mut grads, E_GOAL))?;
        let nxt = s.net(E_NXT).backward(&pass.t_nxt, &d_cond[18..20], slot(&mut grads, E_NXT))?;
        Ok(EsnInputGrads {
            crowd: crowd.try_into().expect("E_future input is 16 wide"),
            goal: Vec2::new(goal[0], goal[1]),
            ego_next: Vec2::new(nxt[0], nxt[1]),
        })
    }
}
