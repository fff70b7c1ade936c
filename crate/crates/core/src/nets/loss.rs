//! Zonotope-shaping losses with analytic gradients.
//!
//! For predicted zonotopes `Z_i = (c_i, G_i)` and ground-truth midpoints
//! `m_i = (T_i + T_{i+1}) / 2`:
//!
//! - `ade  = mean_i ‖m_i − c_i‖`
//! - `fde  = ‖m_6 − c_6‖`
//! - `prev = Σ_i Σ_rows ReLU(A_i·(c_{i−1} + c_i)/2 − b_i)`, with `c_{−1}` the origin
//! - `nxt  = Σ_{i<6} Σ_rows ReLU(A_i·(c_i + c_{i+1})/2 − b_i)`
//! - `gen  = Σ_i |‖g_i0‖ − d1| + Σ_{j≥1} |‖g_ij‖ − d2|`

use serde::{Deserialize, Serialize};

use super::{zero_zono_grads, ZonoSeq, HORIZON, N_STEPS};
use crate::zono::soft::{SoftHalfspace, ZonoGrad};
use crate::zono::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Target length of the first generator.
    pub d1: f64,
    /// Target length of the remaining generators.
    pub d2: f64,
    pub w_ade: f64,
    pub w_fde: f64,
    pub w_prev: f64,
    pub w_nxt: f64,
    pub w_gen: f64,
    pub w_kl: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            d1: 0.1,
            d2: 0.005,
            w_ade: 1.0,
            w_fde: 1.0,
            w_prev: 1.0,
            w_nxt: 1.0,
            w_gen: 1.0,
            w_kl: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ade: f64,
    pub l_fde: f64,
    pub l_prev: f64,
    pub l_nxt: f64,
    pub l_g: f64,
    pub l_kl: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn zonotope_total(&self) -> f64 {
        self.l_ade + self.l_fde + self.l_prev + self.l_nxt + self.l_g
    }

    fn recompute_total(&mut self, cfg: &LossConfig) {
        self.total = cfg.w_kl * self.l_kl
            + cfg.w_ade * self.l_ade
            + cfg.w_fde * self.l_fde
            + cfg.w_prev * self.l_prev
            + cfg.w_nxt * self.l_nxt
            + cfg.w_gen * self.l_g;
    }

    pub fn with_kl(mut self, l_kl: f64, cfg: &LossConfig) -> Self {
        self.l_kl = l_kl;
        self.recompute_total(cfg);
        self
    }

    pub(crate) fn accumulate(&mut self, other: &LossBreakdown) {
        self.l_ade += other.l_ade;
        self.l_fde += other.l_fde;
        self.l_prev += other.l_prev;
        self.l_nxt += other.l_nxt;
        self.l_g += other.l_g;
        self.l_kl += other.l_kl;
        self.total += other.total;
    }

    pub(crate) fn scaled(mut self, s: f64) -> Self {
        for v in [
            &mut self.l_ade,
            &mut self.l_fde,
            &mut self.l_prev,
            &mut self.l_nxt,
            &mut self.l_g,
            &mut self.l_kl,
            &mut self.total,
        ] {
            *v *= s;
        }
        self
    }
}

pub fn truth_midpoints(truth_future: &[Vec2]) -> Vec<Vec2> {
    truth_future.windows(2).map(|w| (w[0] + w[1]) * 0.5).collect()
}

/// Sums `weight · ReLU(row residual)` over all rows of `Z_i` at `p` and
/// backpropagates into `grads[i]` and the point.
fn containment_penalty(
    seq: &ZonoSeq,
    i: usize,
    p: Vec2,
    weight: f64,
    grads: &mut [ZonoGrad],
    d_point: &mut Vec2,
) -> f64 {
    let z = &seq.steps()[i];
    let soft = SoftHalfspace::new(z.center(), z.generators());
    let mut total = 0.0;
    for r in 0..soft.n_rows() {
        let v = soft.residual(r, p);
        if v > 0.0 {
            total += v;
            soft.backprop_row(r, p, weight, d_point, &mut grads[i]);
        }
    }
    total
}

fn length_penalty(g: &Vec2, target: f64, weight: f64, grad: &mut Vec2) -> f64 {
    let len = g.norm();
    let diff = len - target;
    if len > 0.0 && diff != 0.0 {
        *grad += g * (weight * diff.signum() / len);
    }
    diff.abs()
}

/// Zonotope losses (without the KL term) and their gradient with respect to
/// every predicted center and generator. `origin` is the position preceding
/// the first predicted step.
pub fn zonotope_losses(
    pred: &ZonoSeq,
    truth_future: &[Vec2],
    origin: Vec2,
    cfg: &LossConfig,
) -> (LossBreakdown, Vec<ZonoGrad>) {
    assert_eq!(truth_future.len(), HORIZON, "truth must hold {HORIZON} points");
    let mids = truth_midpoints(truth_future);
    let centers = pred.centers();
    let mut grads = zero_zono_grads();
    let mut out = LossBreakdown::default();

    for (i, (m, c)) in mids.iter().zip(&centers).enumerate() {
        let d = m - c;
        let n = d.norm();
        out.l_ade += n / N_STEPS as f64;
        if n > 0.0 {
            grads[i].center -= d * (cfg.w_ade / (N_STEPS as f64 * n));
        }
        if i == N_STEPS - 1 {
            out.l_fde = n;
            if n > 0.0 {
                grads[i].center -= d * (cfg.w_fde / n);
            }
        }
    }

    for i in 0..N_STEPS {
        let prev = if i == 0 { origin } else { centers[i - 1] };
        let p = (prev + centers[i]) * 0.5;
        let mut dp = Vec2::zeros();
        out.l_prev += containment_penalty(pred, i, p, cfg.w_prev, &mut grads, &mut dp);
        grads[i].center += dp * 0.5;
        if i > 0 {
            grads[i - 1].center += dp * 0.5;
        }
    }

    for i in 0..N_STEPS - 1 {
        let p = (centers[i] + centers[i + 1]) * 0.5;
        let mut dp = Vec2::zeros();
        out.l_nxt += containment_penalty(pred, i, p, cfg.w_nxt, &mut grads, &mut dp);
        grads[i].center += dp * 0.5;
        grads[i + 1].center += dp * 0.5;
    }

    for (z, g) in pred.steps().iter().zip(grads.iter_mut()) {
        for (j, (gen, dg)) in z.generators().iter().zip(g.generators.iter_mut()).enumerate() {
            let target = if j == 0 { cfg.d1 } else { cfg.d2 };
            out.l_g += length_penalty(gen, target, cfg.w_gen, dg);
        }
    }

    out.recompute_total(cfg);
    (out, grads)
}

/// Fraction of ground-truth midpoints inside their predicted zonotope.
pub fn midpoint_containment(pred: &ZonoSeq, truth_future: &[Vec2]) -> (usize, usize) {
    let mids = truth_midpoints(truth_future);
    let inside = mids
        .iter()
        .zip(pred.steps())
        .filter(|(m, z)| crate::zono::contains_point(z, **m))
        .count();
    (inside, mids.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{decode_zonotopes, encode_grads, encode_zonotopes};
    use crate::zono::Zonotope2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight_truth(step: f64) -> Vec<Vec2> {
        (1..=8).map(|k| Vec2::new(step * k as f64, 0.0)).collect()
    }

    fn seq_with(centers: &[Vec2], gens: &[Vec2]) -> ZonoSeq {
        ZonoSeq::new(centers.iter().map(|c| Zonotope2::new(*c, gens.to_vec()).unwrap()).collect()).unwrap()
    }

    #[test]
    fn exact_centers_and_lengths_give_zero() {
        let truth = straight_truth(0.5);
        let mids = truth_midpoints(&truth);
        let gens = [
            Vec2::new(0.1, 0.0),
            Vec2::new(0.0, 0.005),
            Vec2::new(0.005, 0.0),
            Vec2::new(0.0, -0.005),
        ];
        let seq = seq_with(&mids, &gens);
        let (l, _) = zonotope_losses(&seq, &truth, Vec2::zeros(), &LossConfig::default());
        assert_eq!(l.l_ade, 0.0);
        assert_eq!(l.l_fde, 0.0);
        assert_eq!(l.l_g, 0.0);
    }

    #[test]
    fn chained_boxes_contain_center_midpoints() {
        // centers 0.5 apart, each box reaches 0.4 along x
        let truth = straight_truth(0.5);
        let mids = truth_midpoints(&truth);
        let gens = [
            Vec2::new(0.4, 0.0),
            Vec2::new(0.0, 0.1),
            Vec2::new(0.0, 0.1),
            Vec2::new(0.0, 0.1),
        ];
        let seq = seq_with(&mids, &gens);
        // first center at 0.75, origin midpoint at 0.375: inside
        let (l, _) = zonotope_losses(&seq, &truth, Vec2::zeros(), &LossConfig::default());
        assert_eq!(l.l_prev, 0.0);
        assert_eq!(l.l_nxt, 0.0);
    }

    #[test]
    fn violating_case_matches_manual_halfspace() {
        // thin boxes: half-width 0.1 along x, 0.2 along y
        let truth = straight_truth(0.5);
        let mids = truth_midpoints(&truth);
        let gens = [
            Vec2::new(0.1, 0.0),
            Vec2::new(0.0, 0.2),
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 0.0),
        ];
        let seq = seq_with(&mids, &gens);
        let (l, _) = zonotope_losses(&seq, &truth, Vec2::zeros(), &LossConfig::default());
        // Box |dx| ≤ 0.1, |dy| ≤ 0.2; a point 0.25 ahead violates the +x row by
        // 0.15. The collapsed generators give (guarded) rows whose normals are
        // (0,0) with zero span, so they contribute nothing.
        // prev: step 0 point at 0.375 vs center 0.75 → 0.275; others 0.25 → 0.15 each.
        let expect_prev = (0.375 - 0.1) + 6.0 * 0.15;
        let expect_nxt = 6.0 * 0.15;
        assert!((l.l_prev - expect_prev).abs() < 1e-9, "{}", l.l_prev);
        assert!((l.l_nxt - expect_nxt).abs() < 1e-9, "{}", l.l_nxt);
    }

    #[test]
    fn kl_enters_total() {
        let b = LossBreakdown {
            l_ade: 1.0,
            l_g: 0.5,
            ..Default::default()
        }
        .with_kl(0.25, &LossConfig::default());
        assert_eq!(b.total, 1.75);
    }

    #[test]
    fn gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = LossConfig::default();
        let truth: Vec<Vec2> = (1..=8)
            .map(|k| Vec2::new(0.45 * k as f64 + rng.gen_range(-0.05..0.05), 0.1 * k as f64))
            .collect();
        let origin = Vec2::new(0.02, -0.01);
        let raw: Vec<f64> = (0..70)
            .map(|i| if i % 10 < 2 { 0.5 * (i / 10) as f64 + 0.3 } else { rng.gen_range(-0.2..0.2) })
            .collect();
        let f = |raw: &[f64]| zonotope_losses(&decode_zonotopes(raw).unwrap(), &truth, origin, &cfg).0.total;
        let seq = decode_zonotopes(&raw).unwrap();
        let (_, g) = zonotope_losses(&seq, &truth, origin, &cfg);
        let g = encode_grads(&g);
        assert_eq!(encode_zonotopes(&seq), raw);
        let h = 1e-7;
        for i in 0..70 {
            let mut p = raw.clone();
            p[i] += h;
            let mut m = raw.clone();
            m[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * fd.abs().max(1.0), "entry {i}: fd {fd} vs {}", g[i]);
        }
    }
}
