//! End-to-end parameter gradients of the full training loss (KL plus the
//! zonotope terms, through decoding and the soft half-space conversion)
//! against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use zonowalk::nets::esn::CrowdSummary;
use zonowalk::nets::train::{esn_loss_grad, ppn_loss_grad, EsnExample, PpnExample};
use zonowalk::nets::{Esn, LossConfig, NetStack, Ppn, StackGrads};
use zonowalk::zono::Vec2;
use zonowalk_oracles::fd::{central_difference, FdProbe};

const H: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;
const PROBES: usize = 24;

fn walk(rng: &mut ChaCha8Rng, start: Vec2, vel: Vec2) -> [Vec2; 8] {
    let mut out = [Vec2::zeros(); 8];
    let mut p = start;
    for slot in out.iter_mut() {
        p += vel + Vec2::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
        *slot = p;
    }
    out
}

fn noise(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..16).map(|_| rng.sample(StandardNormal)).collect()
}

/// Checks `PROBES` random parameters of `stack`, skipping probes that land
/// on a ReLU kink. Returns the number of probes checked.
fn check_stack<M>(
    model: &mut M,
    stack_mut: fn(&mut M) -> &mut NetStack,
    stack: fn(&M) -> &NetStack,
    loss: &dyn Fn(&M, Option<&mut StackGrads>) -> f64,
    rng: &mut ChaCha8Rng,
) -> usize {
    let mut grads = stack(model).zero_grads();
    loss(model, Some(&mut grads));
    let sizes: Vec<usize> = grads.0.iter().map(Vec::len).collect();
    let mut checked = 0;
    let mut attempts = 0;
    while checked < PROBES {
        attempts += 1;
        assert!(attempts < 20 * PROBES, "too many probes on kinks");
        // spread the probes over every sub-network
        let net = attempts % sizes.len();
        let idx = rng.gen_range(0..sizes[net]);
        let analytic = grads.0[net][idx];
        let probe = |m: &mut M, v: f64| {
            stack_mut(m).nets_mut()[net].params_mut()[idx] = v;
        };
        let x0 = stack(model).nets().nth(net).unwrap().1.params()[idx];
        let fd = central_difference(x0, H, |v| {
            probe(model, v);
            let l = loss(model, None);
            probe(model, x0);
            l
        });
        let FdProbe::Smooth(numeric) = fd else { continue };
        let scale = analytic.abs().max(numeric.abs()).max(1e-3);
        let rel = (analytic - numeric).abs() / scale;
        assert!(
            rel < REL_TOL,
            "net {net} param {idx}: analytic {analytic:e} numeric {numeric:e} rel {rel:e}"
        );
        checked += 1;
    }
    checked
}

#[test]
fn ppn_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ppn = Ppn::new(&mut rng);
        let past = walk(&mut rng, Vec2::new(1.0, -2.0), Vec2::new(0.3, 0.2));
        let future = walk(&mut rng, past[7], Vec2::new(0.3, 0.2));
        let ex = PpnExample {
            past,
            future,
            ego_next: Vec2::new(0.35, 0.05),
        };
        let z = noise(&mut rng);
        let cfg = LossConfig::default();
        let loss = |m: &Ppn, g: Option<&mut StackGrads>| ppn_loss_grad(m, &ex, &z, &cfg, g).unwrap().total;
        let n = check_stack(&mut ppn, Ppn::stack_mut, Ppn::stack, &loss, &mut rng);
        assert_eq!(n, PROBES);
    }
}

#[test]
fn esn_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
        let mut esn = Esn::new(&mut rng);
        let mut crowd = CrowdSummary::empty();
        for _ in 0..3 {
            let c: Vec<Vec2> = (0..7).map(|_| Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect();
            crowd.add(&c, c[6]);
        }
        let future = walk(&mut rng, Vec2::zeros(), Vec2::new(0.35, 0.1));
        let ex = EsnExample {
            crowd,
            goal: future[7],
            ego_next: future[0],
            future,
        };
        let z = noise(&mut rng);
        let cfg = LossConfig::default();
        let loss = |m: &Esn, g: Option<&mut StackGrads>| esn_loss_grad(m, &ex, &z, &cfg, g).unwrap().total;
        let n = check_stack(&mut esn, Esn::stack_mut, Esn::stack, &loss, &mut rng);
        assert_eq!(n, PROBES);
    }
}
