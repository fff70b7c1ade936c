//! Closed-loop trials: observe → plan → step the LIP → step the crowd.

use rayon::prelude::*;
use serde::Serialize;
use zonowalk::lip::{brake_control, step, ControlInput, RobotState};
use zonowalk::mpc::{plan, EnvState};
use zonowalk::nets::{Esn, Ppn};
use zonowalk::zono::Zonotope2;
use zonowalk::zono::Vec2;

use crate::config::SimConfig;
use crate::world::{Scenario, World};

#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub ppn: Ppn,
    pub esn: Esn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub seed: u64,
    pub n_peds: usize,
    pub success: bool,
    /// Walking steps until the ego first came within the goal radius.
    pub steps_to_goal: Option<usize>,
    pub steps_taken: usize,
    /// Mean `v_loc` over the steps taken before reaching the goal.
    pub mean_velocity: f64,
    /// Smallest ego-to-pedestrian distance seen; infinite with no pedestrians.
    pub min_ped_distance: f64,
    pub infeasible_count: usize,
    /// Median of `1 / solve time` (wall clock, not deterministic).
    pub median_solve_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub ego: RobotState,
    /// Control applied to reach this state (none for the initial row).
    pub control: Option<ControlInput>,
    pub feasible: bool,
    pub solve_time_s: f64,
    pub objective: f64,
    pub peds: Vec<(u64, Vec2)>,
    pub observed: Vec<u64>,
    pub ego_zonotopes: Vec<Zonotope2>,
    pub ped_zonotopes: Vec<Vec<Zonotope2>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub scenario: Scenario,
    pub steps: Vec<StepLog>,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn run_trial(scenario: &Scenario, models: &Models, cfg: &SimConfig) -> (TrialMetrics, TrialLog) {
    let sc = &cfg.scenario;
    let dt = cfg.mpc.lip.step_duration;
    let mut world = World::new(scenario, &cfg.pedestrians);
    let mut x = scenario.ego_start;
    // pedestrians walk while the ego stands still, to build their history
    for _ in 0..sc.warmup_steps {
        world.step_pedestrians(x.position(), dt);
    }

    let mut steps = vec![StepLog {
        step: 0,
        ego: x,
        control: None,
        feasible: true,
        solve_time_s: 0.0,
        objective: f64::NAN,
        peds: world.positions(),
        observed: Vec::new(),
        ego_zonotopes: Vec::new(),
        ped_zonotopes: Vec::new(),
    }];
    let mut min_dist = world.min_distance_to(x.position());
    let mut warm: Option<Vec<ControlInput>> = None;
    let mut infeasible = 0;
    let mut velocities = Vec::new();
    let mut hz = Vec::new();
    let mut steps_to_goal = None;

    if (x.position() - scenario.goal).norm() <= sc.goal_radius {
        steps_to_goal = Some(0);
    }
    let mut t = 0;
    while steps_to_goal.is_none() && t < scenario.steps {
        t += 1;
        let env = EnvState::observe(x.position(), scenario.goal, &world.observations(), sc.sensory_radius);
        let observed = env.peds().iter().map(|p| p.id).collect();
        velocities.push(x.v_loc);
        let (u, feasible, solve_time, objective, ego_z, ped_z) =
            match plan(&x, &env, &models.ppn, &models.esn, &cfg.mpc, warm.as_deref()) {
                Ok(sol) if sol.diagnostics.feasible => {
                    warm = Some(sol.shifted_controls());
                    let d = sol.diagnostics;
                    (sol.controls[0], true, d.solve_time_s, d.objective, sol.ego_zonotopes, sol.ped_zonotopes)
                }
                Ok(sol) => {
                    warm = None;
                    let d = sol.diagnostics;
                    // stop walking but keep turning as planned, so a robot at rest
                    // facing away from its zonotopes can still line up with them
                    let mut u = brake_control(&x, &cfg.mpc.lip, &cfg.mpc.bounds);
                    u.u_dtheta = sol.controls[0].u_dtheta;
                    (u, false, d.solve_time_s, d.objective, sol.ego_zonotopes, sol.ped_zonotopes)
                }
                Err(e) => {
                    log::warn!("seed {} step {t}: planner error {e}", scenario.seed);
                    warm = None;
                    let u = brake_control(&x, &cfg.mpc.lip, &cfg.mpc.bounds);
                    (u, false, 0.0, f64::NAN, Vec::new(), Vec::new())
                }
            };
        if !feasible {
            infeasible += 1;
        }
        if solve_time > 0.0 {
            hz.push(1.0 / solve_time);
        }
        x = step(&x, &u, &cfg.mpc.lip);
        world.step_pedestrians(x.position(), dt);
        min_dist = min_dist.min(world.min_distance_to(x.position()));
        steps.push(StepLog {
            step: t,
            ego: x,
            control: Some(u),
            feasible,
            solve_time_s: solve_time,
            objective,
            peds: world.positions(),
            observed,
            ego_zonotopes: ego_z,
            ped_zonotopes: ped_z,
        });
        if (x.position() - scenario.goal).norm() <= sc.goal_radius {
            steps_to_goal = Some(t);
        }
    }

    let metrics = TrialMetrics {
        seed: scenario.seed,
        n_peds: scenario.n_peds,
        success: steps_to_goal.is_some(),
        steps_to_goal,
        steps_taken: t,
        mean_velocity: if velocities.is_empty() {
            0.0
        } else {
            velocities.iter().sum::<f64>() / velocities.len() as f64
        },
        min_ped_distance: min_dist,
        infeasible_count: infeasible,
        median_solve_hz: median(&mut hz),
    };
    (
        metrics,
        TrialLog {
            scenario: scenario.clone(),
            steps,
        },
    )
}

/// Runs `trials` seeds `seed, seed + 1, …` in parallel; results come back
/// in seed order.
pub fn run_batch(
    models: &Models,
    cfg: &SimConfig,
    n_peds: usize,
    trials: usize,
    seed: u64,
) -> Vec<(TrialMetrics, TrialLog)> {
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let sc = Scenario::sample(&cfg.scenario, n_peds, seed + i);
            run_trial(&sc, models, cfg)
        })
        .collect()
}
