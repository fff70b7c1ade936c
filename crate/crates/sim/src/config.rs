//! Configuration file.
//!
//! Every key is optional; missing keys keep their defaults. Example:
//!
//! ```toml
//! [scenario]
//! field = 14.0            # side of the square field, m
//! goal = [10.0, 10.0]
//! steps = 100             # walking-step cap
//! goal_radius = 1.0       # success distance, m
//! sensory_radius = 4.0    # planner observation radius, m
//! min_distance = 0.5      # safety threshold d, m
//! warmup_steps = 7        # pedestrian history built before the ego moves
//!
//! [pedestrians]
//! min_speed = 0.6
//! max_speed = 1.4
//! spawn_clearance = 1.5   # min spawn distance from the ego start, m
//! [pedestrians.forces]
//! repulsion = 2.0
//! obstacle_repulsion = 6.0
//!
//! [mpc]
//! horizon = 4
//! w1 = 3.0
//! w2 = 1.0
//! lambda_reach = 100.0
//! lambda_collide = 100.0
//! delta_safe = 0.1
//! max_iters = 200
//! goal_clip = 1.5
//!
//! [train]
//! epochs = 20
//! [train.loss]
//! w_gen = 0.02
//!
//! [data]
//! scenes = 5
//! agents = 12
//! frames = 190
//! ```

use serde::{Deserialize, Serialize};
use std::path::Path;
use zonowalk::crowd::SocialForceParams;
use zonowalk::data::SynthConfig;
use zonowalk::mpc::MpcConfig;
use zonowalk::nets::train::TrainConfig;
use zonowalk::nets::LossConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub field: f64,
    pub goal: [f64; 2],
    pub steps: usize,
    pub goal_radius: f64,
    pub sensory_radius: f64,
    pub min_distance: f64,
    pub warmup_steps: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            field: 14.0,
            goal: [10.0, 10.0],
            steps: 100,
            goal_radius: 1.0,
            sensory_radius: 4.0,
            min_distance: 0.5,
            warmup_steps: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PedestrianConfig {
    pub min_speed: f64,
    pub max_speed: f64,
    pub spawn_clearance: f64,
    pub forces: SocialForceParams,
}

impl Default for PedestrianConfig {
    fn default() -> Self {
        Self {
            min_speed: 0.6,
            max_speed: 1.4,
            spawn_clearance: 1.5,
            // pedestrians give the robot more room than they give each other
            forces: SocialForceParams {
                obstacle_repulsion: 6.0,
                obstacle_range: 0.6,
                ..Default::default()
            },
        }
    }
}

/// Synthetic training crowds: `scenes` seeded recordings of `agents`
/// concurrent walkers over `frames` frames; the last scene is held out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub scenes: usize,
    pub agents: usize,
    pub frames: usize,
    pub synth: SynthConfig,
}

/// Walkers slower than the default crowd, some of them starting from rest,
/// so that the ego network also sees motions the robot can produce.
pub fn default_synth_config() -> SynthConfig {
    SynthConfig {
        min_speed: 0.4,
        max_speed: 1.3,
        wait_prob: 0.4,
        max_wait_frames: 12,
        ..Default::default()
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scenes: 5,
            agents: 12,
            frames: 190,
            synth: default_synth_config(),
        }
    }
}

pub fn default_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        loss: LossConfig {
            w_gen: 0.02,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub pedestrians: PedestrianConfig,
    pub mpc: MpcConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            pedestrians: PedestrianConfig::default(),
            mpc: MpcConfig::default(),
            train: default_train_config(),
            data: DataConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.as_ref().display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = SimConfig::from_toml("[scenario]\nsteps = 40\n[mpc]\nw1 = 5.0\n").unwrap();
        assert_eq!(cfg.scenario.steps, 40);
        assert_eq!(cfg.scenario.goal, [10.0, 10.0]);
        assert_eq!(cfg.mpc.w1, 5.0);
        assert_eq!(cfg.mpc.w2, 1.0);
        assert_eq!(cfg.mpc.horizon, 4);
    }

    #[test]
    fn roundtrip() {
        let cfg = SimConfig::default();
        assert_eq!(SimConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(SimConfig::from_toml("[scenario]\nstepz = 3\n").is_err());
    }
}
