//! Footstep MPC optimizing through the ESN.
//!
//! Decision variables are `N` LIP controls. Each iterate:
//!
//! 1. rolls the LIP out from `x0`,
//! 2. predicts every observed pedestrian with the PPN, conditioned on the
//!    ego's first step `Δp0 = p1 − p0`,
//! 3. predicts the ego's social zonotopes with the ESN from the summed
//!    pedestrian predictions, the (clipped) goal and `Δp0`,
//! 4. evaluates
//!    `J = J_N(x_N) + λ_reach Σ_q reach(p_{q+1}, Z_q) + λ_collide Σ_{q,k} collide(c^k_q, Z_q, Z^k_q) + λ_v Σ_q bounds(v_q)`
//!    and its gradient (through the rollout Jacobians and both networks),
//! 5. takes a projected Adam step on the controls.
//!
//! Networks work in the ego frame (origin at `p0`, world-aligned axes).

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::lip::{rollout, step_gradient, wrap_angle, ControlInput, KinematicBounds, LipParams, RobotState};
use crate::nets::esn::CrowdSummary;
use crate::nets::{encode_grads, zero_zono_grads, Esn, EsnPass, Mode, Ppn, PpnPass, HORIZON, N_STEPS};
use crate::zono::soft::{SoftHalfspace, ZonoGrad};
use crate::zono::{containment_margin, minkowski_sum, to_halfspace, Vec2, Zonotope2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Weight on the position and velocity error at the end of the horizon.
    pub w1: f64,
    /// Weight on the final heading error.
    pub w2: f64,
    pub v_terminal: f64,
    pub lambda_reach: f64,
    pub lambda_collide: f64,
    /// Penalty on `v_loc` leaving its bounds along the horizon.
    pub lambda_bounds: f64,
    /// Required clearance of a pedestrian center outside the Minkowski sum, meters.
    pub delta_safe: f64,
    pub max_iters: usize,
    /// Adam step size on the controls.
    pub step_size: f64,
    /// Stop after `patience` iterations without the best objective improving by `conv_tol`.
    pub conv_tol: f64,
    pub patience: usize,
    /// Largest reach/bounds violation (meters, m/s) still accepted as feasible.
    /// Collision clearance must hold exactly.
    pub reach_tol: f64,
    /// Multiply the penalty weights by 10 and continue once if the budget
    /// ends infeasible.
    pub escalate: bool,
    /// The goal handed to the ESN is pulled to within this distance.
    pub goal_clip: f64,
    /// Log-sum-exp temperature replacing the hard max over half-space rows.
    pub smooth_max: Option<f64>,
    pub lip: LipParams,
    pub bounds: KinematicBounds,
    /// Record per-iterate diagnostics in the solution.
    pub trace: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 4,
            w1: 3.0,
            w2: 1.0,
            v_terminal: 0.0,
            lambda_reach: 100.0,
            lambda_collide: 100.0,
            lambda_bounds: 100.0,
            delta_safe: 0.1,
            max_iters: 200,
            step_size: 0.03,
            conv_tol: 1e-6,
            patience: 20,
            reach_tol: 0.05,
            escalate: true,
            goal_clip: 1.5,
            smooth_max: None,
            lip: LipParams::default(),
            bounds: KinematicBounds::default(),
            trace: false,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.horizon >= 1
            && self.horizon <= N_STEPS
            && [self.w1, self.w2, self.lambda_reach, self.lambda_collide, self.lambda_bounds]
                .iter()
                .all(|w| *w >= 0.0)
            && self.delta_safe > 0.0
            && self.step_size > 0.0
            && self.lip.validate()
            && self.bounds.validate();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// A pedestrian seen by the planner: 8 world positions, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedObservation {
    pub id: u64,
    pub past: [Vec2; HORIZON],
}

impl PedObservation {
    pub fn current(&self) -> Vec2 {
        self.past[HORIZON - 1]
    }
}

/// What the planner may see. Built only through [`EnvState::observe`], which
/// drops every pedestrian farther than the sensory radius from the ego.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    peds: Vec<PedObservation>,
    goal: Vec2,
}

impl EnvState {
    pub fn observe(ego: Vec2, goal: Vec2, candidates: &[PedObservation], radius: f64) -> Self {
        let peds = candidates
            .iter()
            .filter(|p| (p.current() - ego).norm() <= radius)
            .cloned()
            .collect();
        Self { peds, goal }
    }

    pub fn peds(&self) -> &[PedObservation] {
        &self.peds
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub objective: f64,
    pub initial_objective: f64,
    pub terminal_cost: f64,
    /// Largest `max(A·p − b)` over the reach constraints, clipped at 0.
    pub reach_violation: f64,
    /// Largest `δ_safe − margin` over pedestrian constraints, clipped at 0.
    pub collide_violation: f64,
    pub bounds_violation: f64,
    pub iterations: usize,
    pub escalated: bool,
    pub feasible: bool,
    pub solve_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lambda_scale: f64,
    pub objective: f64,
    pub terminal_cost: f64,
    pub reach_violation: f64,
    pub collide_violation: f64,
    pub bounds_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub controls: Vec<ControlInput>,
    pub states: Vec<RobotState>,
    /// World-frame ego zonotopes constraining `p_1 … p_N`.
    pub ego_zonotopes: Vec<Zonotope2>,
    /// World-frame predictions per observed pedestrian (first `N` steps).
    pub ped_zonotopes: Vec<Vec<Zonotope2>>,
    pub diagnostics: Diagnostics,
    pub trace: Vec<TraceRow>,
}

impl MpcSolution {
    /// Controls for a warm start at the next walking step.
    pub fn shifted_controls(&self) -> Vec<ControlInput> {
        let mut u: Vec<ControlInput> = self.controls.iter().skip(1).copied().collect();
        u.push(*self.controls.last().expect("horizon ≥ 1"));
        u
    }
}

pub fn theta_goal(position: Vec2, goal: Vec2) -> f64 {
    let d = goal - position;
    d.y.atan2(d.x)
}

/// `J_N` and its gradient in `(x, y, v_loc, θ)` order.
pub fn terminal_cost(xn: &RobotState, goal: Vec2, theta_g: f64, cfg: &MpcConfig) -> (f64, [f64; 4]) {
    let ex = xn.x - goal.x;
    let ey = xn.y - goal.y;
    let ev = xn.v_loc - cfg.v_terminal;
    let et = wrap_angle(xn.theta - theta_g);
    let value = cfg.w1 * (ex * ex + ey * ey + ev * ev) + cfg.w2 * et * et;
    let grad = [2.0 * cfg.w1 * ex, 2.0 * cfg.w1 * ey, 2.0 * cfg.w1 * ev, 2.0 * cfg.w2 * et];
    (value, grad)
}

/// Max over rows (or its log-sum-exp smoothing) with per-row weights of the
/// gradient.
fn soft_max_rows(hs: &SoftHalfspace<'_>, p: Vec2, smooth: Option<f64>) -> (f64, Vec<(usize, f64)>) {
    match smooth {
        None => {
            let (row, value) = hs.max_residual(p);
            (value, vec![(row, 1.0)])
        }
        Some(tau) => {
            let r: Vec<f64> = hs.residuals(p).collect();
            let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ws: Vec<f64> = r.iter().map(|v| ((v - m) / tau).exp()).collect();
            let sum: f64 = ws.iter().sum();
            let value = m + tau * sum.ln();
            (value, ws.iter().enumerate().map(|(i, w)| (i, w / sum)).collect())
        }
    }
}

/// `ReLU(max(A·p − b))` for `p` against `z`; adds `weight ×` its gradient
/// into `d_point` and `d_zono`.
fn reach_term(
    p: Vec2,
    center: Vec2,
    gens: &[Vec2],
    weight: f64,
    smooth: Option<f64>,
    d_point: &mut Vec2,
    d_zono: &mut ZonoGrad,
) -> f64 {
    let hs = SoftHalfspace::new(center, gens);
    let (m, rows) = soft_max_rows(&hs, p, smooth);
    if m <= 0.0 {
        return 0.0;
    }
    for (row, w) in rows {
        hs.backprop_row(row, p, weight * w, d_point, d_zono);
    }
    m
}

/// `ReLU(δ − max(A_mink·c_ped − b_mink))`; gradients split back onto the
/// ego and pedestrian zonotopes.
#[allow(clippy::too_many_arguments)]
fn collide_term(
    c_ped: Vec2,
    ego_center: Vec2,
    ego_gens: &[Vec2],
    ped_gens: &[Vec2],
    delta: f64,
    weight: f64,
    smooth: Option<f64>,
    d_ped_center: &mut Vec2,
    d_ego: &mut ZonoGrad,
    d_ped_gens: &mut [Vec2],
) -> f64 {
    let gens: Vec<Vec2> = ego_gens.iter().chain(ped_gens).copied().collect();
    let hs = SoftHalfspace::new(ego_center, &gens);
    let (m, rows) = soft_max_rows(&hs, c_ped, smooth);
    let pen = delta - m;
    if pen <= 0.0 {
        return 0.0;
    }
    let mut dz = ZonoGrad::zeros(gens.len());
    for (row, w) in rows {
        hs.backprop_row(row, c_ped, -weight * w, d_ped_center, &mut dz);
    }
    d_ego.center += dz.center;
    let ne = ego_gens.len();
    for (a, b) in d_ego.generators.iter_mut().zip(&dz.generators[..ne]) {
        *a += b;
    }
    for (a, b) in d_ped_gens.iter_mut().zip(&dz.generators[ne..]) {
        *a += b;
    }
    pen
}

/// Reach penalty `ReLU(max(A·p − b))` and its gradient in `p`.
pub fn reach_penalty(p: Vec2, ego_zono: &Zonotope2) -> Result<(f64, Vec2)> {
    to_halfspace(ego_zono)?;
    let mut dp = Vec2::zeros();
    let mut dz = ZonoGrad::zeros(ego_zono.n_generators());
    let v = reach_term(p, ego_zono.center(), ego_zono.generators(), 1.0, None, &mut dp, &mut dz);
    Ok((v, dp))
}

/// Collision penalty `ReLU(δ − max(A·c_ped − b))` on the Minkowski sum
/// `Z(c_ego, [G_ego G_ped])`, and its gradient in `c_ped`.
pub fn collide_penalty(c_ped: Vec2, ego_zono: &Zonotope2, ped_zono: &Zonotope2, delta: f64) -> Result<(f64, Vec2)> {
    let mut combined = minkowski_sum(ego_zono, ped_zono);
    combined = combined.translated(ego_zono.center() - combined.center());
    to_halfspace(&combined)?;
    let mut dp = Vec2::zeros();
    let mut de = ZonoGrad::zeros(ego_zono.n_generators());
    let mut dg = vec![Vec2::zeros(); ped_zono.n_generators()];
    let v = collide_term(
        c_ped,
        ego_zono.center(),
        ego_zono.generators(),
        ped_zono.generators(),
        delta,
        1.0,
        None,
        &mut dp,
        &mut de,
        &mut dg,
    );
    Ok((v, dp))
}

/// Exact clearance of `c_ped` outside `Z(c_ego, [G_ego G_ped])`.
pub fn collision_margin(c_ped: Vec2, ego_zono: &Zonotope2, ped_zono: &Zonotope2) -> f64 {
    let mut generators = ego_zono.generators().to_vec();
    generators.extend_from_slice(ped_zono.generators());
    let z = Zonotope2::new(ego_zono.center(), generators).expect("finite zonotopes");
    containment_margin(&z, c_ped)
}

struct Evaluation {
    objective: f64,
    terminal: f64,
    reach_violation: f64,
    collide_violation: f64,
    bounds_violation: f64,
    grad: Vec<[f64; 2]>,
    states: Vec<RobotState>,
    ego: Vec<Zonotope2>,
    peds: Vec<Vec<Zonotope2>>,
}

struct Problem<'a> {
    x0: RobotState,
    env: &'a EnvState,
    ppn: &'a Ppn,
    esn: &'a Esn,
    cfg: &'a MpcConfig,
    goal_rel: Vec2,
    theta_g: f64,
    /// Pedestrian pasts in the ego frame.
    pasts: Vec<[Vec2; HORIZON]>,
}

impl<'a> Problem<'a> {
    fn new(x0: RobotState, env: &'a EnvState, ppn: &'a Ppn, esn: &'a Esn, cfg: &'a MpcConfig) -> Self {
        let p0 = x0.position();
        let mut goal_rel = env.goal - p0;
        let d = goal_rel.norm();
        if d > cfg.goal_clip {
            goal_rel *= cfg.goal_clip / d;
        }
        let pasts = env.peds.iter().map(|o| o.past.map(|p| p - p0)).collect();
        Self {
            x0,
            env,
            ppn,
            esn,
            cfg,
            goal_rel,
            theta_g: theta_goal(p0, env.goal),
            pasts,
        }
    }

    fn evaluate(&self, controls: &[ControlInput], lambda_scale: f64) -> Result<Evaluation> {
        let cfg = self.cfg;
        let n = controls.len();
        let states = rollout(&self.x0, controls, &cfg.lip);
        let p0 = self.x0.position();
        let dp0 = states[1].position() - p0;

        let ped_passes: Vec<PpnPass> = self
            .pasts
            .iter()
            .map(|past| self.ppn.forward(past, dp0, None, Mode::Infer, None))
            .collect::<Result<_>>()?;
        let mut crowd = CrowdSummary::empty();
        for pass in &ped_passes {
            crowd.add(&pass.zonos.centers(), pass.endpoint);
        }
        let esn_pass: EsnPass = self.esn.forward(&crowd, self.goal_rel, dp0, None, Mode::Infer, None)?;
        let ego_steps = esn_pass.zonos.steps();

        // state adjoints, (x, y, v, θ) per state
        let mut adj = vec![[0.0f64; 4]; n + 1];
        let (terminal, tg) = terminal_cost(&states[n], self.env.goal, self.theta_g, cfg);
        adj[n] = tg;

        let lam_r = cfg.lambda_reach * lambda_scale;
        let lam_c = cfg.lambda_collide * lambda_scale;
        let lam_b = cfg.lambda_bounds * lambda_scale;
        let mut d_ego = zero_zono_grads();
        let mut d_peds: Vec<Vec<ZonoGrad>> = ped_passes.iter().map(|_| zero_zono_grads()).collect();
        let mut reach_sum = 0.0;
        let mut collide_sum = 0.0;
        let mut bounds_sum = 0.0;
        let mut reach_violation: f64 = 0.0;
        let mut collide_violation: f64 = 0.0;
        let mut bounds_violation: f64 = 0.0;

        for q in 0..n {
            let z = &ego_steps[q];
            let p = states[q + 1].position() - p0;
            let mut dp = Vec2::zeros();
            let r = reach_term(p, z.center(), z.generators(), lam_r, cfg.smooth_max, &mut dp, &mut d_ego[q]);
            reach_sum += r;
            adj[q + 1][0] += dp.x;
            adj[q + 1][1] += dp.y;
            reach_violation = reach_violation.max(containment_margin(z, p).max(0.0));

            for (k, pass) in ped_passes.iter().enumerate() {
                let pz = &pass.zonos.steps()[q];
                let mut d_c = Vec2::zeros();
                let mut d_pg = vec![Vec2::zeros(); pz.n_generators()];
                let c = collide_term(
                    pz.center(),
                    z.center(),
                    z.generators(),
                    pz.generators(),
                    cfg.delta_safe,
                    lam_c,
                    cfg.smooth_max,
                    &mut d_c,
                    &mut d_ego[q],
                    &mut d_pg,
                );
                collide_sum += c;
                let dk = &mut d_peds[k][q];
                dk.center += d_c;
                for (a, b) in dk.generators.iter_mut().zip(&d_pg) {
                    *a += b;
                }
                let margin = collision_margin(pz.center(), z, pz);
                collide_violation = collide_violation.max((cfg.delta_safe - margin).max(0.0));
            }

            let v = states[q + 1].v_loc;
            let slack = cfg.bounds.v_loc.slack(v);
            let bv = slack.violation();
            if bv > 0.0 {
                bounds_sum += bv;
                adj[q + 1][2] += if v > cfg.bounds.v_loc.hi { lam_b } else { -lam_b };
            }
            bounds_violation = bounds_violation.max(bv);
        }

        // networks → Δp0
        let esn_in = self.esn.backward(&esn_pass, &encode_grads(&d_ego), None, None)?;
        let mut d_dp0 = esn_in.ego_next;
        for (k, pass) in ped_passes.iter().enumerate() {
            let dk = &mut d_peds[k];
            for (i, g) in dk.iter_mut().enumerate() {
                g.center += Vec2::new(esn_in.crowd[2 * i], esn_in.crowd[2 * i + 1]);
            }
            let d_end = Vec2::new(esn_in.crowd[14], esn_in.crowd[15]);
            let ppn_in = self.ppn.backward(pass, &encode_grads(dk), d_end, None, None)?;
            d_dp0 += ppn_in.ego_next;
        }
        adj[1][0] += d_dp0.x;
        adj[1][1] += d_dp0.y;

        // reverse sweep through the rollout
        let mut grad = vec![[0.0; 2]; n];
        for q in (0..n).rev() {
            let jac = step_gradient(&states[q], &controls[q], &cfg.lip);
            let a = adj[q + 1];
            for (c, g) in grad[q].iter_mut().enumerate() {
                *g = (0..4).map(|r| jac.d_control[(r, c)] * a[r]).sum();
            }
            let mut prev = adj[q];
            for (c, pv) in prev.iter_mut().enumerate() {
                *pv += (0..4).map(|r| jac.d_state[(r, c)] * a[r]).sum::<f64>();
            }
            adj[q] = prev;
        }

        let objective = terminal + lam_r * reach_sum + lam_c * collide_sum + lam_b * bounds_sum;
        let ego = ego_steps[..n].iter().map(|z| z.translated(p0)).collect();
        let peds = ped_passes
            .iter()
            .map(|pass| pass.zonos.steps()[..n].iter().map(|z| z.translated(p0)).collect())
            .collect();
        Ok(Evaluation {
            objective,
            terminal,
            reach_violation,
            collide_violation,
            bounds_violation,
            grad,
            states,
            ego,
            peds,
        })
    }
}

fn is_feasible(e: &Evaluation, cfg: &MpcConfig) -> bool {
    e.collide_violation == 0.0 && e.reach_violation <= cfg.reach_tol && e.bounds_violation <= cfg.reach_tol
}

fn total_violation(e: &Evaluation) -> f64 {
    e.reach_violation + e.collide_violation + e.bounds_violation
}

struct Candidate {
    controls: Vec<ControlInput>,
    eval: Evaluation,
    feasible: bool,
    /// Objective at the base penalty weights.
    base_objective: f64,
}

/// Runs the optimizer and returns the selected iterate, feasible or not.
///
/// Selection: the lowest-objective feasible iterate whose objective does
/// not exceed the starting one; otherwise the lowest-objective iterate.
pub fn plan(
    x0: &RobotState,
    env: &EnvState,
    ppn: &Ppn,
    esn: &Esn,
    cfg: &MpcConfig,
    warm_start: Option<&[ControlInput]>,
) -> Result<MpcSolution> {
    cfg.validate()?;
    let start = Instant::now();
    let problem = Problem::new(*x0, env, ppn, esn, cfg);
    let n = cfg.horizon;
    let mut u: Vec<ControlInput> = match warm_start {
        Some(w) if w.len() == n => w.iter().map(|c| cfg.bounds.clamp(c)).collect(),
        _ => vec![ControlInput::default(); n],
    };

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut escalated = false;
    let mut candidates: Vec<Candidate> = Vec::new();

    let rounds: &[f64] = if cfg.escalate { &[1.0, 10.0] } else { &[1.0] };
    for (round, &scale) in rounds.iter().enumerate() {
        if round > 0 {
            if candidates.iter().any(|c| c.feasible) {
                break;
            }
            escalated = true;
            let best = candidates
                .iter()
                .min_by(|a, b| total_violation(&a.eval).total_cmp(&total_violation(&b.eval)))
                .expect("at least one iterate");
            u = best.controls.clone();
        }
        let mut m = vec![[0.0; 2]; n];
        let mut v = vec![[0.0; 2]; n];
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut best = f64::INFINITY;
        let mut stale = 0;
        for t in 1..=cfg.max_iters {
            let eval = problem.evaluate(&u, scale)?;
            let base = if scale == 1.0 {
                eval.objective
            } else {
                problem.evaluate(&u, 1.0)?.objective
            };
            iterations += 1;
            if cfg.trace {
                trace.push(TraceRow {
                    iteration: iterations,
                    lambda_scale: scale,
                    objective: eval.objective,
                    terminal_cost: eval.terminal,
                    reach_violation: eval.reach_violation,
                    collide_violation: eval.collide_violation,
                    bounds_violation: eval.bounds_violation,
                });
            }
            let grad = eval.grad.clone();
            if eval.objective < best - cfg.conv_tol {
                best = eval.objective;
                stale = 0;
            } else {
                stale += 1;
            }
            candidates.push(Candidate {
                controls: u.clone(),
                feasible: is_feasible(&eval, cfg),
                eval,
                base_objective: base,
            });
            if stale >= cfg.patience {
                break;
            }
            let tf = t as i32;
            for q in 0..n {
                let mut vals = [u[q].u_f, u[q].u_dtheta];
                for c in 0..2 {
                    let g = grad[q][c];
                    m[q][c] = b1 * m[q][c] + (1.0 - b1) * g;
                    v[q][c] = b2 * v[q][c] + (1.0 - b2) * g * g;
                    let mh = m[q][c] / (1.0 - b1.powi(tf));
                    let vh = v[q][c] / (1.0 - b2.powi(tf));
                    vals[c] -= cfg.step_size * mh / (vh.sqrt() + eps);
                }
                u[q] = cfg.bounds.clamp(&ControlInput::new(vals[0], vals[1]));
            }
        }
    }

    let initial = candidates[0].base_objective;
    let chosen = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.feasible && c.base_objective <= initial)
        .min_by(|a, b| a.1.base_objective.total_cmp(&b.1.base_objective))
        .or_else(|| {
            candidates
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.base_objective.total_cmp(&b.1.base_objective))
        })
        .map(|(i, _)| i)
        .expect("at least one iterate");
    let c = candidates.swap_remove(chosen);
    debug_assert_eq!(c.eval.states, rollout(x0, &c.controls, &cfg.lip));

    Ok(MpcSolution {
        diagnostics: Diagnostics {
            objective: c.base_objective,
            initial_objective: initial,
            terminal_cost: c.eval.terminal,
            reach_violation: c.eval.reach_violation,
            collide_violation: c.eval.collide_violation,
            bounds_violation: c.eval.bounds_violation,
            iterations,
            escalated,
            feasible: c.feasible,
            solve_time_s: start.elapsed().as_secs_f64(),
        },
        controls: c.controls,
        states: c.eval.states,
        ego_zonotopes: c.eval.ego,
        ped_zonotopes: c.eval.peds,
        trace,
    })
}

/// Like [`plan`], but an infeasible result is an error.
pub fn solve(
    x0: &RobotState,
    env: &EnvState,
    ppn: &Ppn,
    esn: &Esn,
    cfg: &MpcConfig,
    warm_start: Option<&[ControlInput]>,
) -> Result<MpcSolution> {
    let sol = plan(x0, env, ppn, esn, cfg, warm_start)?;
    if !sol.diagnostics.feasible {
        let d = &sol.diagnostics;
        return Err(Error::Infeasible {
            violation: d.reach_violation.max(d.collide_violation).max(d.bounds_violation),
            iterations: d.iterations,
        });
    }
    Ok(sol)
}

pub const TRACE_HEADER: &str =
    "iteration,lambda_scale,objective,terminal_cost,reach_violation,collide_violation,bounds_violation";

pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.iteration,
            r.lambda_scale,
            r.objective,
            r.terminal_cost,
            r.reach_violation,
            r.collide_violation,
            r.bounds_violation
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn terminal_cost_zero_at_goal() {
        let cfg = MpcConfig::default();
        let x = RobotState::new(1.0, 2.0, 0.0, 0.3);
        assert_eq!(terminal_cost(&x, v(1.0, 2.0), 0.3, &cfg).0, 0.0);
    }

    #[test]
    fn terminal_cost_gradient() {
        let cfg = MpcConfig::default();
        let h = 1e-6;
        for (theta, tg) in [(0.4, -0.2), (PI - 0.01, -PI + 0.02), (-3.1, 3.1)] {
            let x = RobotState::new(0.3, -0.7, 0.6, theta);
            let goal = v(2.0, 1.0);
            let (_, g) = terminal_cost(&x, goal, tg, &cfg);
            let base = [x.x, x.y, x.v_loc, x.theta];
            for i in 0..4 {
                let mut hi = base;
                let mut lo = base;
                hi[i] += h;
                lo[i] -= h;
                let f = |s: [f64; 4]| {
                    let st = RobotState {
                        x: s[0],
                        y: s[1],
                        v_loc: s[2],
                        theta: s[3],
                    };
                    terminal_cost(&st, goal, tg, &cfg).0
                };
                let fd = (f(hi) - f(lo)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1.0), "{i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn reach_penalty_box() {
        let z = Zonotope2::aabb(v(0.0, 0.0), 1.0, 1.0).unwrap();
        assert_eq!(reach_penalty(v(0.0, 0.0), &z).unwrap().0, 0.0);
        let (val, g) = reach_penalty(v(1.5, 0.0), &z).unwrap();
        assert!((val - 0.5).abs() < 1e-9);
        assert!((g - v(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn collide_penalty_cases() {
        let ego = Zonotope2::aabb(v(0.0, 0.0), 0.2, 0.1).unwrap();
        let ped = Zonotope2::aabb(v(10.0, 0.0), 0.1, 0.1).unwrap();
        assert_eq!(collide_penalty(v(10.0, 0.0), &ego, &ped, 0.1).unwrap().0, 0.0);
        let (val, _) = collide_penalty(v(0.0, 0.0), &ego, &ped, 0.1).unwrap();
        assert!(val >= 0.1);
    }

    #[test]
    fn observe_filters_by_radius() {
        let mk = |id, x: f64| PedObservation {
            id,
            past: [v(x, 0.0); HORIZON],
        };
        let env = EnvState::observe(v(0.0, 0.0), v(5.0, 5.0), &[mk(1, 3.9), mk(2, 4.1), mk(3, -1.0)], 4.0);
        let ids: Vec<u64> = env.peds().iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![1, 3]);
    }

    #[test]
    fn plan_invariants_untrained() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ppn = Ppn::new(&mut rng);
        let esn = Esn::new(&mut rng);
        let cfg = MpcConfig::default();
        let x0 = RobotState::new(0.0, 0.0, 0.5, 0.0);
        let peds = [PedObservation {
            id: 0,
            past: std::array::from_fn(|i| v(2.0 - 0.1 * i as f64, 0.5)),
        }];
        let env = EnvState::observe(x0.position(), v(1.0, 0.0), &peds, 4.0);
        let sol = plan(&x0, &env, &ppn, &esn, &cfg, None).unwrap();
        assert_eq!(sol.states, rollout(&x0, &sol.controls, &cfg.lip));
        assert!(sol.diagnostics.objective <= sol.diagnostics.initial_objective);
        for u in &sol.controls {
            assert_eq!(cfg.bounds.clamp(u), *u);
        }
        assert_eq!(sol.ego_zonotopes.len(), 4);
        assert_eq!(sol.ped_zonotopes.len(), 1);
    }
}
