//! Closed-loop crowd navigation with the zonotope footstep planner.
//!
//! - [`config`]: TOML configuration (scenario, pedestrians, planner, training).
//! - [`world`]: seeded scenarios and social-force pedestrians.
//! - [`trial`]: the observe → plan → step loop and its metrics.
//! - [`export`]: CSV and SVG artifacts.
//! - [`recipe`]: synthetic-crowd training of the two networks.
//! - [`selftest`]: acceptance checks against the reference oracles.

pub mod config;
pub mod export;
pub mod recipe;
pub mod selftest;
pub mod trial;
pub mod world;

pub use config::SimConfig;
pub use trial::{run_batch, run_trial, Models, TrialLog, TrialMetrics};
pub use world::{Scenario, World};
