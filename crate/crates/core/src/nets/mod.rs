//! Pedestrian Prediction Network (PPN) and Ego-agent Social Network (ESN).
//!
//! Both are conditional VAEs built from small MLPs. Their last layer emits 70
//! numbers decoded as seven zonotopes (one per future walking step) with four
//! generators each. All positions are in the ego frame: the ego-agent's
//! current position is the origin, axes stay world-aligned.

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::nn::{adam_update, AdamHyper, AdamState, Mlp, NamedNets};
use crate::zono::soft::ZonoGrad;
use crate::zono::{Vec2, Zonotope2};

pub mod esn;
pub mod loss;
pub mod ppn;
pub mod train;

pub use esn::{Esn, EsnPass};
pub use loss::{zonotope_losses, LossBreakdown, LossConfig};
pub use ppn::{Ppn, PpnPass};

/// Future walking steps covered by one prediction.
pub const N_STEPS: usize = 7;
/// Generators per predicted zonotope.
pub const N_GEN: usize = 4;
/// Numbers per step: center (2) + generators (2 × 4).
pub const STEP_WIDTH: usize = 2 + 2 * N_GEN;
pub const RAW_WIDTH: usize = N_STEPS * STEP_WIDTH;
/// Observed and predicted trajectory length in frames.
pub const HORIZON: usize = 8;
pub const LATENT_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Encode the ground truth and sample the posterior.
    Train,
    /// Sample the prior (or use its mean when no noise is given).
    Infer,
}

/// Seven ego-frame zonotopes, one per future walking step.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonoSeq {
    steps: Vec<Zonotope2>,
}

impl ZonoSeq {
    pub fn new(steps: Vec<Zonotope2>) -> Result<Self> {
        check_len("zonotope sequence", N_STEPS, steps.len())?;
        for z in &steps {
            check_len("zonotope generators", N_GEN, z.n_generators())?;
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[Zonotope2] {
        &self.steps
    }

    pub fn centers(&self) -> Vec<Vec2> {
        self.steps.iter().map(Zonotope2::center).collect()
    }

    pub fn translated(&self, offset: Vec2) -> Self {
        Self {
            steps: self.steps.iter().map(|z| z.translated(offset)).collect(),
        }
    }
}

/// Step `i` reads `raw[10i..10i+2]` as the center and `raw[10i+2..10i+10]`
/// as the 2×4 generator matrix stored column-major.
pub fn decode_zonotopes(raw: &[f64]) -> Result<ZonoSeq> {
    check_len("zonotope decoder input", RAW_WIDTH, raw.len())?;
    let steps = raw
        .chunks_exact(STEP_WIDTH)
        .map(|s| {
            let center = Vec2::new(s[0], s[1]);
            let gens = s[2..].chunks_exact(2).map(|g| Vec2::new(g[0], g[1])).collect();
            Zonotope2::new(center, gens)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ZonoSeq { steps })
}

pub fn encode_zonotopes(seq: &ZonoSeq) -> Vec<f64> {
    let mut raw = Vec::with_capacity(RAW_WIDTH);
    for z in &seq.steps {
        raw.extend_from_slice(z.center().as_slice());
        for g in z.generators() {
            raw.extend_from_slice(g.as_slice());
        }
    }
    raw
}

/// Flattens per-step zonotope gradients into the decoder's raw layout.
pub fn encode_grads(grads: &[ZonoGrad]) -> Vec<f64> {
    let mut raw = Vec::with_capacity(RAW_WIDTH);
    for g in grads {
        raw.extend_from_slice(g.center.as_slice());
        for gg in &g.generators {
            raw.extend_from_slice(gg.as_slice());
        }
    }
    raw
}

pub fn zero_zono_grads() -> Vec<ZonoGrad> {
    vec![ZonoGrad::zeros(N_GEN); N_STEPS]
}

pub(crate) fn flatten(points: &[Vec2]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

/// A fixed set of named sub-networks trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct NetStack {
    model: &'static str,
    names: &'static [&'static str],
    nets: Vec<Mlp>,
}

impl NetStack {
    fn new<R: Rng + ?Sized>(
        model: &'static str,
        names: &'static [&'static str],
        dims: &[&[usize]],
        rng: &mut R,
    ) -> Self {
        let nets = dims.iter().map(|d| Mlp::new(d, rng)).collect();
        Self { model, names, nets }
    }

    fn net(&self, i: usize) -> &Mlp {
        &self.nets[i]
    }

    pub fn nets(&self) -> impl Iterator<Item = (&'static str, &Mlp)> {
        self.names.iter().copied().zip(&self.nets)
    }

    pub fn nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.nets
    }

    pub fn n_params(&self) -> usize {
        self.nets.iter().map(Mlp::n_params).sum()
    }

    pub fn zero_grads(&self) -> StackGrads {
        StackGrads(self.nets.iter().map(|n| vec![0.0; n.n_params()]).collect())
    }

    pub fn adam_state(&self) -> Vec<AdamState> {
        self.nets.iter().map(|n| AdamState::new(n.n_params())).collect()
    }

    pub fn apply_adam(&mut self, grads: &StackGrads, state: &mut [AdamState], hyper: &AdamHyper) -> Result<()> {
        for ((net, g), st) in self.nets.iter_mut().zip(&grads.0).zip(state) {
            adam_update(net.params_mut(), g, st, hyper)?;
        }
        Ok(())
    }

    pub fn to_named(&self) -> NamedNets {
        NamedNets {
            model: self.model.to_string(),
            nets: self.nets().map(|(n, m)| (n.to_string(), m.clone())).collect(),
        }
    }

    fn from_named(
        model: &'static str,
        names: &'static [&'static str],
        dims: &[&[usize]],
        named: &NamedNets,
    ) -> Result<Self> {
        if named.model != model {
            return Err(Error::Checkpoint(format!("expected model {model}, found {}", named.model)));
        }
        let nets = names
            .iter()
            .zip(dims)
            .map(|(name, d)| {
                let net = named.get(name)?;
                if net.dims() != *d {
                    return Err(Error::Checkpoint(format!(
                        "{model}.{name} has dims {:?}, expected {d:?}",
                        net.dims()
                    )));
                }
                Ok(net.clone())
            })
            .collect::<Result<_>>()?;
        Ok(Self { model, names, nets })
    }
}

/// Parameter gradients for each sub-network of a [`NetStack`].
#[derive(Debug, Clone, PartialEq)]
pub struct StackGrads(pub Vec<Vec<f64>>);

impl StackGrads {
    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|g| *g *= s);
    }

    pub fn add(&mut self, other: &StackGrads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn reset(&mut self) {
        self.0.iter_mut().flatten().for_each(|g| *g = 0.0);
    }

    pub(crate) fn slot(&mut self, i: usize) -> Option<&mut [f64]> {
        Some(self.0[i].as_mut_slice())
    }
}

pub(crate) fn slot<'a>(grads: &'a mut Option<&mut StackGrads>, i: usize) -> Option<&'a mut [f64]> {
    grads.as_deref_mut().and_then(|g| g.slot(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_raw_decodes_to_points_at_origin() {
        let seq = decode_zonotopes(&[0.0; RAW_WIDTH]).unwrap();
        assert_eq!(seq.steps().len(), N_STEPS);
        for z in seq.steps() {
            assert_eq!(z.center(), Vec2::zeros());
            assert_eq!(z.n_generators(), N_GEN);
            assert!(z.generators().iter().all(|g| *g == Vec2::zeros()));
        }
    }

    #[test]
    fn hand_packed_step() {
        let mut raw = vec![0.0; RAW_WIDTH];
        raw[..10].copy_from_slice(&[1.0, 2.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let seq = decode_zonotopes(&raw).unwrap();
        let e1 = Vec2::new(1.0, 0.0);
        let e2 = Vec2::new(0.0, 1.0);
        assert_eq!(seq.steps()[0], Zonotope2::new(Vec2::new(1.0, 2.0), vec![e1, e2, e1, e2]).unwrap());
    }

    #[test]
    fn roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..RAW_WIDTH).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert_eq!(encode_zonotopes(&decode_zonotopes(&raw).unwrap()), raw);
        }
        assert!(decode_zonotopes(&[0.0; 69]).is_err());
    }
}
