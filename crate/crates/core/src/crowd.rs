//! Goal-directed social-force walkers, used both to synthesize training
//! crowds and to move pedestrians in closed-loop simulation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::zono::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocialForceParams {
    /// Relaxation time toward the desired velocity, seconds.
    pub relax_time: f64,
    /// Pairwise repulsion magnitude, m/s².
    pub repulsion: f64,
    /// Decay length of the pairwise repulsion, meters.
    pub repulsion_range: f64,
    /// Repulsion magnitude from external agents (the robot), m/s².
    pub obstacle_repulsion: f64,
    pub obstacle_range: f64,
    /// Walkers are projected apart so that no pair gets closer than this.
    pub hard_core: f64,
    pub max_speed: f64,
    /// Std-dev of the per-step velocity perturbation, m/s.
    pub speed_noise: f64,
    pub substeps: usize,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        Self {
            relax_time: 0.5,
            repulsion: 2.0,
            repulsion_range: 0.35,
            obstacle_repulsion: 3.0,
            obstacle_range: 0.5,
            hard_core: 0.4,
            max_speed: 1.8,
            speed_noise: 0.03,
            substeps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Walker {
    pub id: u64,
    pub pos: Vec2,
    pub vel: Vec2,
    pub goal: Vec2,
    pub desired_speed: f64,
}

impl Walker {
    pub fn heading_to_goal(&self) -> Vec2 {
        let d = self.goal - self.pos;
        let n = d.norm();
        if n > 1e-9 {
            d / n
        } else {
            Vec2::zeros()
        }
    }
}

fn repulsion(from: Vec2, to: Vec2, strength: f64, range: f64, contact: f64) -> Vec2 {
    let d = to - from;
    let dist = d.norm().max(1e-6);
    d / dist * strength * ((contact - dist) / range).exp()
}

/// Advances every walker by `dt`. `obstacles` are external agents that push
/// walkers away but are not moved themselves.
pub fn social_force_step<R: Rng + ?Sized>(
    walkers: &mut [Walker],
    obstacles: &[Vec2],
    params: &SocialForceParams,
    dt: f64,
    rng: &mut R,
) {
    if params.speed_noise > 0.0 {
        let noise = Normal::new(0.0, params.speed_noise).expect("finite std-dev");
        for w in walkers.iter_mut() {
            w.vel += Vec2::new(noise.sample(rng), noise.sample(rng));
        }
    }
    let h = dt / params.substeps.max(1) as f64;
    let n = walkers.len();
    let mut forces = vec![Vec2::zeros(); n];
    for _ in 0..params.substeps.max(1) {
        for (i, f) in forces.iter_mut().enumerate() {
            let w = &walkers[i];
            let mut acc = (w.heading_to_goal() * w.desired_speed - w.vel) / params.relax_time;
            for (j, o) in walkers.iter().enumerate() {
                if i != j {
                    acc += repulsion(o.pos, w.pos, params.repulsion, params.repulsion_range, params.hard_core);
                }
            }
            for o in obstacles {
                acc += repulsion(*o, w.pos, params.obstacle_repulsion, params.obstacle_range, params.hard_core);
            }
            *f = acc;
        }
        for (w, f) in walkers.iter_mut().zip(&forces) {
            w.vel += f * h;
            let speed = w.vel.norm();
            if speed > params.max_speed {
                w.vel *= params.max_speed / speed;
            }
            w.pos += w.vel * h;
        }
        separate(walkers, params.hard_core);
    }
}

/// Pushes overlapping pairs apart symmetrically until every pair is at
/// least `radius` apart (a few Gauss-Seidel sweeps).
fn separate(walkers: &mut [Walker], radius: f64) {
    let target = radius * (1.0 + 1e-6);
    for _ in 0..8 {
        let mut moved = false;
        for i in 0..walkers.len() {
            for j in i + 1..walkers.len() {
                let d = walkers[j].pos - walkers[i].pos;
                let dist = d.norm();
                if dist < target {
                    let dir = if dist > 1e-9 {
                        d / dist
                    } else {
                        // coincident: split along x, ordered by index
                        Vec2::new(1.0, 0.0)
                    };
                    let push = dir * (0.5 * (target - dist));
                    walkers[i].pos -= push;
                    walkers[j].pos += push;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

pub fn min_pairwise_distance(points: &[Vec2]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}
