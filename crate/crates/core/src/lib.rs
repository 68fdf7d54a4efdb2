//! Desk-scale workbench for tactile-augmented door opening.
//!
//! The crate bundles a small door-opening simulator with a 30-unit tactile
//! array on the gripper pads, the shaped per-step reward, domain
//! randomization of dynamics and sensing, and a TD3 learner built on a
//! hand-written dense network kernel.
//!
//! Module map:
//!
//! - [`nn`]: MLP forward/backward, adaptive-moment optimizer, Polyak blend, `TDNN` files.
//! - [`tactile`]: array geometry, force → signal → bits pipeline, resistive scan circuit,
//!   threshold calibration.
//! - [`env`]: kinematic 7-joint arm, hinged door, penalty contacts, observation assembly.
//! - [`reward`]: the five-term shaped reward with its breakdown.
//! - [`domain_rand`]: parameter sampling, observation/action noise, observation delay.
//! - [`td3`]: replay buffer, twin critics, delayed actor updates, training loop.

pub mod domain_rand;
pub mod env;
pub mod geometry;
pub mod nn;
pub mod reward;
pub mod rng;
pub mod tactile;
pub mod td3;

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
