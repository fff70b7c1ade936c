//! Acceptance checks, each against an independent reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::time::Instant;
use zonowalk::lip::{step, ControlInput, LipParams, RobotState};
use zonowalk::nets::esn::CrowdSummary;
use zonowalk::nets::train::{esn_loss_grad, ppn_loss_grad, EsnExample, PpnExample};
use zonowalk::nets::{Esn, LossConfig, NetStack, Ppn, StackGrads, LATENT_DIM};
use zonowalk::zono::{contains_point, intersects, Vec2, Zonotope2};
use zonowalk_oracles::fd::{central_difference, FdProbe};
use zonowalk_oracles::geom::{signed_separation, zonotope_polygon};
use zonowalk_oracles::ode::rk4_pendulum;
use zonowalk_oracles::P2;

use crate::config::SimConfig;
use crate::export::write_metrics_csv;
use crate::recipe::train_synthetic;
use crate::trial::{run_batch, Models, TrialMetrics};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}. {}: {}", self.id, self.name, self.detail)
    }
}

fn p2(v: Vec2) -> P2 {
    [v.x, v.y]
}

fn random_zonotope(rng: &mut ChaCha8Rng, spread: f64) -> Zonotope2 {
    let n = rng.gen_range(1..=8);
    let c = Vec2::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread));
    let g = (0..n)
        .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Zonotope2::new(c, g).expect("finite input")
}

/// `intersects` against vertex enumeration plus separating axes.
pub fn geometry(pairs: usize, seed: u64) -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hard = 0;
    let mut overlapping = 0;
    let mut near = 0;
    for _ in 0..pairs {
        let a = random_zonotope(&mut rng, 4.0);
        let b = random_zonotope(&mut rng, 4.0);
        let pa = zonotope_polygon(p2(a.center()), &a.generators().iter().map(|g| p2(*g)).collect::<Vec<_>>());
        let pb = zonotope_polygon(p2(b.center()), &b.generators().iter().map(|g| p2(*g)).collect::<Vec<_>>());
        let sep = signed_separation(&pa, &pb);
        let expect = sep <= 0.0;
        overlapping += expect as usize;
        if intersects(&a, &b) != expect {
            if sep.abs() < 1e-9 {
                near += 1;
            } else {
                hard += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Check {
        id: 1,
        name: "geometry oracle equivalence",
        passed: hard == 0 && secs < 10.0,
        detail: format!(
            "{pairs} pairs ({overlapping} overlapping), {hard} disagreements, {near} within 1e-9, {secs:.2} s"
        ),
    }
}

/// Interior β-samples must be contained, support-pushed points must not.
pub fn halfspace(zonotopes: usize, points: usize, seed: u64) -> Check {
    let results: Vec<(usize, usize)> = (0..zonotopes as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i));
            let z = random_zonotope(&mut rng, 4.0);
            let mut inside_fail = 0;
            let mut outside_fail = 0;
            let mut beta = vec![0.0; z.n_generators()];
            for _ in 0..points {
                beta.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..=1.0));
                if !contains_point(&z, z.point_at(&beta)) {
                    inside_fail += 1;
                }
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let d = Vec2::new(a.cos(), a.sin());
                let p = z.center() + (z.support(d) - z.center().dot(&d) + 1e-3) * d;
                if contains_point(&z, p) {
                    outside_fail += 1;
                }
            }
            (inside_fail, outside_fail)
        })
        .collect();
    let inside: usize = results.iter().map(|r| r.0).sum();
    let outside: usize = results.iter().map(|r| r.1).sum();
    Check {
        id: 2,
        name: "half-space correctness",
        passed: inside == 0 && outside == 0,
        detail: format!(
            "{zonotopes} zonotopes × {points} points: {inside} interior rejected, {outside} exterior accepted"
        ),
    }
}

/// Closed-form step against RK4 on the pendulum ODE.
pub fn lip_fidelity(draws: usize, seed: u64) -> Check {
    let p = LipParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_x: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    for _ in 0..draws {
        let v = rng.gen_range(0.0..=1.0);
        let u = ControlInput::new(rng.gen_range(-0.1..=0.4), 0.0);
        let x0 = RobotState::new(0.0, 0.0, v, 0.0);
        let x1 = step(&x0, &u, &p);
        let (xr, vr) = rk4_pendulum(0.0, v, u.u_f, p.omega(), p.step_duration, 2000);
        worst_x = worst_x.max((x1.x - xr).abs());
        worst_v = worst_v.max((x1.v_loc - vr).abs());
    }
    Check {
        id: 3,
        name: "LIP fidelity",
        passed: worst_x < 1e-6 && worst_v < 1e-6,
        detail: format!(
            "{draws} draws (T = {} s, H = {} m): max |Δx| error {worst_x:.2e} m, max |Δv| error {worst_v:.2e} m/s",
            p.step_duration, p.com_height
        ),
    }
}

const FD_H: f64 = 1e-6;

/// Worst relative error over `probes` smooth parameter probes.
fn probe_stack<M>(
    model: &mut M,
    stack_mut: fn(&mut M) -> &mut NetStack,
    stack: fn(&M) -> &NetStack,
    loss: &dyn Fn(&M, Option<&mut StackGrads>) -> f64,
    probes: usize,
    rng: &mut ChaCha8Rng,
) -> (usize, f64) {
    let mut grads = stack(model).zero_grads();
    loss(model, Some(&mut grads));
    let sizes: Vec<usize> = grads.0.iter().map(Vec::len).collect();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut attempts = 0;
    while checked < probes && attempts < 20 * probes {
        attempts += 1;
        let net = attempts % sizes.len();
        let idx = rng.gen_range(0..sizes[net]);
        let analytic = grads.0[net][idx];
        let x0 = stack(model).nets().nth(net).expect("net index").1.params()[idx];
        let fd = central_difference(x0, FD_H, |v| {
            stack_mut(model).nets_mut()[net].params_mut()[idx] = v;
            let l = loss(model, None);
            stack_mut(model).nets_mut()[net].params_mut()[idx] = x0;
            l
        });
        let FdProbe::Smooth(numeric) = fd else { continue };
        let scale = analytic.abs().max(numeric.abs()).max(1e-3);
        worst = worst.max((analytic - numeric).abs() / scale);
        checked += 1;
    }
    (checked, worst)
}

fn walk(rng: &mut ChaCha8Rng, start: Vec2, vel: Vec2) -> [Vec2; 8] {
    let mut p = start;
    std::array::from_fn(|_| {
        p += vel + Vec2::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
        p
    })
}

/// Parameter gradients of the full loss against central differences.
pub fn gradients(probes: usize, seed: u64) -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = LossConfig::default();
    let noise = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..LATENT_DIM).map(|_| rng.sample(StandardNormal)).collect() };

    let mut ppn = Ppn::new(&mut rng);
    let past = walk(&mut rng, Vec2::new(1.0, -2.0), Vec2::new(0.3, 0.2));
    let ex = PpnExample {
        past,
        future: walk(&mut rng, past[7], Vec2::new(0.3, 0.2)),
        ego_next: Vec2::new(0.35, 0.05),
    };
    let z = noise(&mut rng);
    let loss = |m: &Ppn, g: Option<&mut StackGrads>| ppn_loss_grad(m, &ex, &z, &cfg, g).map_or(f64::NAN, |l| l.total);
    let (n_ppn, e_ppn) = probe_stack(&mut ppn, Ppn::stack_mut, Ppn::stack, &loss, probes, &mut rng);

    let mut esn = Esn::new(&mut rng);
    let mut crowd = CrowdSummary::empty();
    for _ in 0..3 {
        let c: Vec<Vec2> = (0..7)
            .map(|_| Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
            .collect();
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
    let loss = |m: &Esn, g: Option<&mut StackGrads>| esn_loss_grad(m, &ex, &z, &cfg, g).map_or(f64::NAN, |l| l.total);
    let (n_esn, e_esn) = probe_stack(&mut esn, Esn::stack_mut, Esn::stack, &loss, probes, &mut rng);

    let secs = t.elapsed().as_secs_f64();
    Check {
        id: 4,
        name: "end-to-end gradient check",
        passed: n_ppn >= probes && n_esn >= probes && e_ppn < 1e-4 && e_esn < 1e-4 && secs < 60.0,
        detail: format!(
            "PPN {n_ppn} probes, max rel err {e_ppn:.1e}; ESN {n_esn} probes, max rel err {e_esn:.1e}; {secs:.1} s"
        ),
    }
}

/// Trains the synthetic recipe and checks held-out ADE and containment.
/// Returns the trained models for the navigation checks.
pub fn training(cfg: &SimConfig) -> (Check, Option<Models>) {
    let t = Instant::now();
    match train_synthetic(&cfg.data, &cfg.train) {
        Ok((models, r)) => {
            let ppn_ratio = r.ppn_after.ade / r.ppn_before.ade;
            let esn_ratio = r.esn_after.ade / r.esn_before.ade;
            let passed = ppn_ratio <= 0.5 && esn_ratio <= 0.5 && r.esn_after.containment >= 0.85;
            let detail = format!(
                "ESN ADE {:.3} → {:.3} m (×{esn_ratio:.2}), FDE {:.3} m, containment {:.3} on {} held-out; \
                 PPN ADE {:.3} → {:.3} m (×{ppn_ratio:.2}), containment {:.3}; {:.0} s",
                r.esn_before.ade,
                r.esn_after.ade,
                r.esn_after.fde,
                r.esn_after.containment,
                r.esn_after.n,
                r.ppn_before.ade,
                r.ppn_after.ade,
                r.ppn_after.containment,
                t.elapsed().as_secs_f64()
            );
            (
                Check {
                    id: 5,
                    name: "training effectiveness",
                    passed,
                    detail,
                },
                Some(models),
            )
        }
        Err(e) => (
            Check {
                id: 5,
                name: "training effectiveness",
                passed: false,
                detail: format!("training failed: {e:#}"),
            },
            None,
        ),
    }
}

pub struct NavigationReport {
    pub metrics: Vec<TrialMetrics>,
    /// Per-step solve times at each density, seconds.
    pub solve_times: Vec<(usize, Vec<f64>)>,
    pub seconds: f64,
}

pub const DENSITIES: [usize; 3] = [5, 15, 30];

pub fn run_navigation(models: &Models, cfg: &SimConfig, trials: usize, seed: u64) -> NavigationReport {
    let t = Instant::now();
    let mut metrics = Vec::new();
    let mut solve_times = Vec::new();
    for n in DENSITIES {
        let batch = run_batch(models, cfg, n, trials, seed);
        let mut times = Vec::new();
        for (m, log) in batch {
            times.extend(log.steps.iter().filter(|s| s.control.is_some()).map(|s| s.solve_time_s));
            metrics.push(m);
        }
        solve_times.push((n, times));
    }
    NavigationReport {
        metrics,
        solve_times,
        seconds: t.elapsed().as_secs_f64(),
    }
}

pub fn navigation(report: &NavigationReport, cfg: &SimConfig) -> Check {
    let d = cfg.scenario.min_distance;
    let mut parts = Vec::new();
    let mut passed = report.seconds < 600.0;
    for n in DENSITIES {
        let ms: Vec<&TrialMetrics> = report.metrics.iter().filter(|m| m.n_peds == n).collect();
        let ok = ms.iter().filter(|m| m.success).count();
        let rate = ok as f64 / ms.len().max(1) as f64;
        let unsafe_ok = ms.iter().filter(|m| m.success && m.min_ped_distance < d).count();
        let closest = ms.iter().map(|m| m.min_ped_distance).fold(f64::INFINITY, f64::min);
        let need = if n >= 30 { 0.8 } else { 0.9 };
        passed &= rate >= need && unsafe_ok == 0;
        parts.push(format!(
            "{n} peds: {ok}/{} success, {unsafe_ok} successes closer than {d} m (closest {closest:.2} m)",
            ms.len()
        ));
    }
    Check {
        id: 6,
        name: "navigation protocol",
        passed,
        detail: format!("{}; {:.0} s", parts.join("; "), report.seconds),
    }
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

pub fn solve_time(report: &NavigationReport) -> Check {
    let mut times = report
        .solve_times
        .iter()
        .find(|(n, _)| *n == 30)
        .map(|(_, t)| t.clone())
        .unwrap_or_default();
    times.sort_by(f64::total_cmp);
    let ms = |q: f64| 1e3 * quantile(&times, q);
    let median = ms(0.5);
    Check {
        id: 7,
        name: "solve performance at 30 pedestrians",
        passed: median < 100.0,
        detail: format!(
            "{} solves: min {:.1} / p10 {:.1} / median {median:.1} / p90 {:.1} / p99 {:.1} / max {:.1} ms",
            times.len(),
            ms(0.0),
            ms(0.1),
            ms(0.9),
            ms(0.99),
            ms(1.0)
        ),
    }
}

/// Two identical batches must give identical metrics CSV bytes.
pub fn determinism(models: &Models, cfg: &SimConfig, seed: u64) -> Check {
    let csv = || {
        let metrics: Vec<TrialMetrics> = run_batch(models, cfg, 15, 3, seed).into_iter().map(|r| r.0).collect();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &metrics).map(|_| buf)
    };
    let detail;
    let passed = match (csv(), csv()) {
        (Ok(a), Ok(b)) => {
            detail = format!("two runs of 3 trials: {} and {} bytes, identical = {}", a.len(), b.len(), a == b);
            a == b
        }
        (Err(e), _) | (_, Err(e)) => {
            detail = format!("csv error: {e:#}");
            false
        }
    };
    Check {
        id: 8,
        name: "determinism",
        passed,
        detail,
    }
}

/// Every check in order; checks 6 to 8 use the models trained by check 5.
pub fn run_all(cfg: &SimConfig, seed: u64, mut report: impl FnMut(&Check)) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |c: Check| {
        report(&c);
        out.push(c);
    };
    push(geometry(10_000, seed));
    push(halfspace(1_000, 1_000, seed));
    push(lip_fidelity(1_000, seed));
    push(gradients(24, seed));
    let (c, models) = training(cfg);
    push(c);
    match models {
        Some(m) => {
            let nav = run_navigation(&m, cfg, 10, seed);
            push(navigation(&nav, cfg));
            push(solve_time(&nav));
            push(determinism(&m, cfg, seed));
        }
        None => {
            for (id, name) in [(6, "navigation protocol"), (7, "solve performance at 30 pedestrians"), (8, "determinism")] {
                push(Check {
                    id,
                    name,
                    passed: false,
                    detail: "skipped: no trained models".into(),
                });
            }
        }
    }
    out
}
