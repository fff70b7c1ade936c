//! Pedestrian Prediction Network.
//!
//! ```text
//! F_cond   = [E_ped(past) | E_nxt(ego_next)]                      32
//! F_global = [F_cond | E_end(true endpoint)]                      48  (train)
//! z        ~ E_latent(F_global)                                   16
//! endpoint = D_latent([F_cond | z])                                2
//! raw      = P_future([F_cond | E_end(endpoint) | endpoint])      70
//! ```

use rand::Rng;

use super::{decode_zonotopes, flatten, slot, Mode, NetStack, StackGrads, ZonoSeq, HORIZON, LATENT_DIM};
use crate::error::{check_len, Error, Result};
use crate::nn::{sample_latent, sample_latent_backward, GaussianLatent, GradTape, NamedNets};
use crate::zono::Vec2;

const E_PED: usize = 0;
const E_END: usize = 1;
const E_NXT: usize = 2;
const E_LATENT: usize = 3;
const D_LATENT: usize = 4;
const P_FUTURE: usize = 5;

const NAMES: &[&str] = &["E_ped", "E_end", "E_nxt", "E_latent", "D_latent", "P_future"];
const DIMS: &[&[usize]] = &[
    &[16, 32, 16],
    &[2, 8, 16],
    &[2, 32, 16],
    &[48, 8, 16, 32],
    &[48, 32, 16, 32, 2],
    &[50, 32, 16, 32, 70],
];
const COND: usize = 32;
const ENDF: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Ppn {
    stack: NetStack,
}

/// One forward pass with everything needed for backprop.
#[derive(Debug, Clone)]
pub struct PpnPass {
    pub zonos: ZonoSeq,
    pub endpoint: Vec2,
    pub latent: GaussianLatent,
    pub raw: Vec<f64>,
    mode: Mode,
    noise: Vec<f64>,
    t_ped: GradTape,
    t_nxt: GradTape,
    t_end_truth: Option<GradTape>,
    t_latent: Option<GradTape>,
    t_dlat: GradTape,
    t_end_pred: GradTape,
    t_future: GradTape,
}

/// Gradients with respect to the network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PpnInputGrads {
    pub past: Vec<f64>,
    pub ego_next: Vec2,
}

impl Ppn {
    pub const MODEL: &'static str = "PPN";

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

    /// `ped_past` holds the 8 observed positions (oldest first), `noise`
    /// the latent draw. In [`Mode::Infer`] a missing `noise` means `z = 0`.
    pub fn forward(
        &self,
        ped_past: &[Vec2],
        ego_next: Vec2,
        truth_endpoint: Option<Vec2>,
        mode: Mode,
        noise: Option<&[f64]>,
    ) -> Result<PpnPass> {
        check_len("ppn past", HORIZON, ped_past.len())?;
        let noise = noise.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; LATENT_DIM]);
        check_len("ppn noise", LATENT_DIM, noise.len())?;
        let s = &self.stack;

        let (f_ped, t_ped) = s.net(E_PED).forward(&flatten(ped_past))?;
        let (f_nxt, t_nxt) = s.net(E_NXT).forward(ego_next.as_slice())?;
        let cond: Vec<f64> = f_ped.into_iter().chain(f_nxt).collect();

        let (latent, z, t_end_truth, t_latent) = match mode {
            Mode::Train => {
                let truth = truth_endpoint.ok_or(Error::MissingTruth("pedestrian endpoint"))?;
                let (f_end, t_end) = s.net(E_END).forward(truth.as_slice())?;
                let global: Vec<f64> = cond.iter().copied().chain(f_end).collect();
                let (head, t_lat) = s.net(E_LATENT).forward(&global)?;
                let gl = GaussianLatent::from_head(&head)?;
                let z = sample_latent(&gl, &noise)?;
                (gl, z, Some(t_end), Some(t_lat))
            }
            Mode::Infer => {
                let gl = GaussianLatent::from_head(&[0.0; 2 * LATENT_DIM])?;
                let z = sample_latent(&gl, &noise)?;
                (gl, z, None, None)
            }
        };

        let dlat_in: Vec<f64> = cond.iter().copied().chain(z).collect();
        let (endpoint, t_dlat) = s.net(D_LATENT).forward(&dlat_in)?;
        let (f_end_pred, t_end_pred) = s.net(E_END).forward(&endpoint)?;
        let fut_in: Vec<f64> = cond
            .iter()
            .copied()
            .chain(f_end_pred)
            .chain(endpoint.iter().copied())
            .collect();
        let (raw, t_future) = s.net(P_FUTURE).forward(&fut_in)?;
        let zonos = decode_zonotopes(&raw)?;

        Ok(PpnPass {
            zonos,
            endpoint: Vec2::new(endpoint[0], endpoint[1]),
            latent,
            raw,
            mode,
            noise,
            t_ped,
            t_nxt,
            t_end_truth,
            t_latent,
            t_dlat,
            t_end_pred,
            t_future,
        })
    }

    /// Backpropagates through a pass. `d_raw` is the gradient on the 70-wide
    /// zonotope output, `d_endpoint` on the predicted endpoint, and
    /// `d_latent` the `(mu, log_var)` gradient (train mode only, e.g. from
    /// the KL term). Parameter gradients are accumulated into `grads`.
    pub fn backward(
        &self,
        pass: &PpnPass,
        d_raw: &[f64],
        d_endpoint: Vec2,
        d_latent: Option<(&[f64], &[f64])>,
        mut grads: Option<&mut StackGrads>,
    ) -> Result<PpnInputGrads> {
        let s = &self.stack;
        let d_in = s.net(P_FUTURE).backward(&pass.t_future, d_raw, slot(&mut grads, P_FUTURE))?;
        let mut d_cond = d_in[..COND].to_vec();
        let d_end_feat = &d_in[COND..COND + ENDF];
        let mut d_end = vec![d_in[COND + ENDF] + d_endpoint.x, d_in[COND + ENDF + 1] + d_endpoint.y];
        let d_via_enc = s.net(E_END).backward(&pass.t_end_pred, d_end_feat, slot(&mut grads, E_END))?;
        d_end.iter_mut().zip(&d_via_enc).for_each(|(a, b)| *a += b);

        let d_dlat = s.net(D_LATENT).backward(&pass.t_dlat, &d_end, slot(&mut grads, D_LATENT))?;
        d_cond.iter_mut().zip(&d_dlat[..COND]).for_each(|(a, b)| *a += b);
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
            let t_end = pass.t_end_truth.as_ref().expect("train pass has endpoint tape");
            s.net(E_END).backward(t_end, &d_global[COND..], slot(&mut grads, E_END))?;
        }

        let past = s.net(E_PED).backward(&pass.t_ped, &d_cond[..16], slot(&mut grads, E_PED))?;
        let nxt = s.net(E_NXT).backward(&pass.t_nxt, &d_cond[16..], slot(&mut grads, E_NXT))?;
        Ok(PpnInputGrads {
            past,
            ego_next: Vec2::new(nxt[0], nxt[1]),
        })
    }
}
