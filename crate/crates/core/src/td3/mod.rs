//! TD3: twin critics with clipped double-Q targets, target policy smoothing,
//! delayed actor updates and Polyak-tracked target networks.

mod agent;
mod replay;
pub mod toy;
mod train;

pub use agent::{
    actor_ascent_step, critic_regression_step, exploration_action, exploration_sigma,
    sample_smoothing_noise, single_critic_targets, targets_with_noise, Batch, Policy, QFunction,
    Td3Agent, UpdateStats,
};
pub use replay::ReplayBuffer;
pub use train::{
    episode_seed, evaluate_policy, load_bundle, read_manifest, save_bundle, train, write_log_csv,
    write_timing_csv, BundleManifest, EpisodeLog, EvalEpisode, ResumeState, TrainError,
    TrainOptions, TrainOutcome, BUNDLE_FILES, LOG_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::env::EnvParams;
use crate::nn::AdamConfig;
use crate::tactile::UnitBits;

/// Episodic task driven by the trainer.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Starts an episode whose randomness derives from `episode_seed`.
    fn reset(&mut self, episode_seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> EnvStep;
    /// Dynamics of the current episode, when the task has any.
    fn episode_params(&self) -> Option<EnvParams> {
        None
    }
    /// Hard cap on steps per episode enforced by the caller, if any.
    fn step_budget(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// True end of the task (not a time limit); stops bootstrapping.
    pub terminal: bool,
    /// Weighted reward terms (door, dist, ori, grasp, tactile).
    pub reward_terms: [f64; 5],
    /// Task progress: door angle in degrees, or the toy position.
    pub progress: f64,
    pub grasp: bool,
    pub active_units: UnitBits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Td3Config {
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: u64,
    pub smoothing_sigma: f64,
    pub smoothing_clip: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub exploration_sigma_initial: f64,
    pub exploration_sigma_final: f64,
    pub exploration_decay_steps: u64,
    pub warmup_steps: u64,
    pub hidden: Vec<usize>,
    pub actor_optimizer: AdamConfig,
    pub critic_optimizer: AdamConfig,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            smoothing_sigma: 0.2,
            smoothing_clip: 0.5,
            batch_size: 256,
            buffer_capacity: 1_000_000,
            exploration_sigma_initial: 0.3,
            exploration_sigma_final: 0.05,
            exploration_decay_steps: 300_000,
            warmup_steps: 1000,
            hidden: vec![256, 256],
            actor_optimizer: AdamConfig::default(),
            critic_optimizer: AdamConfig::default(),
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.policy_delay == 0 {
            return Err("policy_delay must be positive".into());
        }
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_clip >= 0.0) {
            return Err("smoothing sigma and clip must be non-negative".into());
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err("batch_size and buffer_capacity must be positive".into());
        }
        if !(self.exploration_sigma_initial >= 0.0 && self.exploration_sigma_final >= 0.0) {
            return Err("exploration sigmas must be non-negative".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err("hidden layer widths must be positive".into());
        }
        for (name, opt) in [("actor", &self.actor_optimizer), ("critic", &self.critic_optimizer)] {
            if !(opt.step_size > 0.0
                && opt.beta1 > 0.0
                && opt.beta1 < 1.0
                && opt.beta2 > 0.0
                && opt.beta2 < 1.0
                && opt.epsilon > 0.0)
            {
                return Err(format!("{name}_optimizer has invalid coefficients"));
            }
        }
        Ok(())
    }
}
