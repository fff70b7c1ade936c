//! Zonotope-based social navigation for a bipedal reduced-order model.
//!
//! - [`zono`]: planar zonotope algebra and collision checks.
//! - [`lip`]: step-to-step Linear Inverted Pendulum dynamics and bounds.
//! - [`nn`]: dense networks, Gaussian latents, Adam, checkpoints.
//! - [`nets`]: pedestrian / ego CVAE networks and the zonotope-shaping losses.
//! - [`data`]: crowd trajectory files, training windows, synthetic crowds.
//! - [`mpc`]: the footstep planner optimizing through the networks.

pub mod crowd;
pub mod data;
pub mod error;
pub mod lip;
pub mod mpc;
pub mod nets;
pub mod nn;
pub mod zono;

pub use error::{Error, Result};
