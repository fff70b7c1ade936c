//! Seeded scenarios and the pedestrian crowd.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use zonowalk::crowd::{social_force_step, Walker};
use zonowalk::lip::RobotState;
use zonowalk::mpc::PedObservation;
use zonowalk::nets::HORIZON;
use zonowalk::zono::Vec2;

use crate::config::{PedestrianConfig, ScenarioConfig};

/// Everything a trial needs that depends on the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub field: f64,
    pub n_peds: usize,
    pub goal: Vec2,
    pub ego_start: RobotState,
    pub steps: usize,
    pub seed: u64,
}

impl Scenario {
    /// Ego starts at `(0, y)` with `y ~ U[0, field − 1]`, heading 0, at rest.
    pub fn sample(cfg: &ScenarioConfig, n_peds: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = rng.gen_range(0.0..=cfg.field - 1.0);
        Self {
            field: cfg.field,
            n_peds,
            goal: Vec2::new(cfg.goal[0], cfg.goal[1]),
            ego_start: RobotState::new(0.0, y, 0.0, 0.0),
            steps: cfg.steps,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub peds: Vec<Walker>,
    history: Vec<VecDeque<Vec2>>,
    field: f64,
    cfg: PedestrianConfig,
    rng: ChaCha8Rng,
}

fn waypoint(rng: &mut ChaCha8Rng, field: f64) -> Vec2 {
    Vec2::new(rng.gen_range(0.0..field), rng.gen_range(0.0..field))
}

impl World {
    /// Pedestrians spawn uniformly in the field, away from the ego start and
    /// from each other, each heading for a random waypoint in the field.
    pub fn new(scenario: &Scenario, cfg: &PedestrianConfig) -> Self {
        // separate stream from the scenario draw
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x5eed_0fc0_ffee);
        let ego = scenario.ego_start.position();
        let mut peds: Vec<Walker> = Vec::with_capacity(scenario.n_peds);
        let min_gap = cfg.forces.hard_core * 2.0;
        while peds.len() < scenario.n_peds {
            let pos = waypoint(&mut rng, scenario.field);
            if (pos - ego).norm() < cfg.spawn_clearance || peds.iter().any(|w| (w.pos - pos).norm() < min_gap) {
                continue;
            }
            let mut w = Walker {
                id: peds.len() as u64,
                pos,
                vel: Vec2::zeros(),
                goal: waypoint(&mut rng, scenario.field),
                desired_speed: rng.gen_range(cfg.min_speed..=cfg.max_speed),
            };
            w.vel = w.heading_to_goal() * w.desired_speed;
            peds.push(w);
        }
        let history = peds.iter().map(|w| VecDeque::from([w.pos])).collect();
        Self {
            peds,
            history,
            field: scenario.field,
            cfg: *cfg,
            rng,
        }
    }

    /// Advances the crowd by one walking step; the ego pushes pedestrians
    /// away but is not moved by them.
    pub fn step_pedestrians(&mut self, ego: Vec2, dt: f64) {
        social_force_step(&mut self.peds, &[ego], &self.cfg.forces, dt, &mut self.rng);
        for w in self.peds.iter_mut() {
            if (w.goal - w.pos).norm() < 0.5 {
                w.goal = waypoint(&mut self.rng, self.field);
            }
        }
        for (h, w) in self.history.iter_mut().zip(&self.peds) {
            h.push_back(w.pos);
            if h.len() > HORIZON {
                h.pop_front();
            }
        }
    }

    pub fn positions(&self) -> Vec<(u64, Vec2)> {
        self.peds.iter().map(|w| (w.id, w.pos)).collect()
    }

    /// Pedestrians with a full 8-step history, as the planner would record them.
    pub fn observations(&self) -> Vec<PedObservation> {
        self.peds
            .iter()
            .zip(&self.history)
            .filter(|(_, h)| h.len() == HORIZON)
            .map(|(w, h)| PedObservation {
                id: w.id,
                past: std::array::from_fn(|i| h[i]),
            })
            .collect()
    }

    pub fn min_distance_to(&self, p: Vec2) -> f64 {
        self.peds
            .iter()
            .map(|w| (w.pos - p).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use zonowalk::crowd::min_pairwise_distance;

    fn scenario(n: usize, seed: u64) -> Scenario {
        Scenario::sample(&ScenarioConfig::default(), n, seed)
    }

    #[test]
    fn spawn_inside_field() {
        for seed in 0..20 {
            let sc = scenario(30, seed);
            assert!((0.0..=13.0).contains(&sc.ego_start.y));
            let w = World::new(&sc, &PedestrianConfig::default());
            assert_eq!(w.peds.len(), 30);
            for p in &w.peds {
                assert!((0.0..14.0).contains(&p.pos.x) && (0.0..14.0).contains(&p.pos.y));
            }
        }
    }

    #[test]
    fn same_seed_same_rollout() {
        let run = || {
            let mut w = World::new(&scenario(15, 4), &PedestrianConfig::default());
            for _ in 0..30 {
                w.step_pedestrians(Vec2::new(1.0, 1.0), 0.4);
            }
            w.positions()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn lone_pedestrian_heads_for_waypoint() {
        let cfg = PedestrianConfig {
            forces: zonowalk::crowd::SocialForceParams {
                speed_noise: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut w = World::new(&scenario(1, 9), &cfg);
        let start = w.peds[0].pos;
        let goal = w.peds[0].goal;
        let dir = (goal - start).normalize();
        let far_ego = Vec2::new(-100.0, -100.0);
        let mut last = 0.0;
        while w.peds[0].goal == goal {
            w.step_pedestrians(far_ego, 0.4);
            let d = w.peds[0].pos - start;
            // stays on the segment and makes progress along it
            assert!((d.x * dir.y - d.y * dir.x).abs() < 1e-9);
            assert!(d.dot(&dir) > last);
            last = d.dot(&dir);
        }
        assert!((w.peds[0].pos - goal).norm() < 0.5);
    }

    #[test]
    fn history_fills_after_warmup() {
        let mut w = World::new(&scenario(5, 2), &PedestrianConfig::default());
        assert!(w.observations().is_empty());
        for _ in 0..HORIZON - 1 {
            w.step_pedestrians(Vec2::new(-50.0, 0.0), 0.4);
        }
        let obs = w.observations();
        assert_eq!(obs.len(), 5);
        assert_eq!(obs[0].current(), w.peds[0].pos);
    }

    #[test]
    fn crowd_keeps_hard_core() {
        let cfg = PedestrianConfig::default();
        let mut w = World::new(&scenario(30, 11), &cfg);
        for _ in 0..50 {
            w.step_pedestrians(Vec2::new(-50.0, 0.0), 0.4);
            let pts: Vec<Vec2> = w.peds.iter().map(|p| p.pos).collect();
            assert!(min_pairwise_distance(&pts) >= cfg.forces.hard_core);
        }
    }
}
