//! Domain randomization of dynamics, observations, actions and tactile bits.
//!
//! Dynamics and table offsets are drawn once per episode. Observation noise,
//! action noise, delay and tactile flips are drawn every step. The
//! observation pipeline is: flip tactile bits, add noise to the 25
//! proprioceptive components, then apply the delay to the whole vector.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{DoorEnv, EnvError, EnvParams, StepResult, ACTION_DIM, PROPRIO_DIM};
use crate::env::{OBS_EE_POS, OBS_KNOB_REL};
use crate::rng::{stream, Purpose, StreamRng};
use crate::tactile::{flip_bits, UNITS};
use crate::td3::{EnvStep, Environment};

/// Closed interval sampled uniformly when enabled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub low: f64,
    pub high: f64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl Range {
    pub const fn new(low: f64, high: f64) -> Self {
        Self {
            low,
            high,
            enabled: true,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.low.is_finite() && self.high.is_finite() && self.low <= self.high
    }

    /// A uniform draw, or `fallback` when disabled. A degenerate range returns
    /// its bound without consuming randomness.
    pub fn sample<R: Rng + ?Sized>(&self, fallback: f64, rng: &mut R) -> f64 {
        if !self.enabled {
            fallback
        } else if self.low == self.high {
            self.low
        } else {
            rng.random_range(self.low..=self.high)
        }
    }

    fn active(&self) -> bool {
        self.enabled && (self.low != 0.0 || self.high != 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub enabled: bool,
    /// Probability that a step returns the previous observation.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandConfig {
    pub knob_friction: Range,
    pub hinge_stiffness: Range,
    pub hinge_damping: Range,
    pub hinge_friction_loss: Range,
    pub door_mass: Range,
    pub knob_mass: Range,
    pub table_offset_x: Range,
    pub table_offset_y: Range,
    pub obs_noise: Range,
    pub action_noise: Range,
    pub obs_delay: DelayConfig,
    pub p_flip: f64,
    /// Values used for disabled ranges.
    pub nominal: EnvParams,
}

impl Default for RandConfig {
    fn default() -> Self {
        Self {
            knob_friction: Range::new(0.8, 1.0),
            hinge_stiffness: Range::new(0.1, 0.8),
            hinge_damping: Range::new(0.1, 0.3),
            hinge_friction_loss: Range::new(0.0, 1.0),
            door_mass: Range::new(50.0, 150.0),
            knob_mass: Range::new(2.0, 10.0),
            table_offset_x: Range::new(-0.05, 0.05),
            table_offset_y: Range::new(-0.05, 0.05),
            obs_noise: Range::new(-0.002, 0.002),
            action_noise: Range::new(-0.01, 0.01),
            obs_delay: DelayConfig {
                enabled: true,
                probability: 0.5,
            },
            p_flip: 0.005,
            nominal: EnvParams::default(),
        }
    }
}

impl RandConfig {
    /// Every channel off: the nominal deterministic environment.
    pub fn disabled() -> Self {
        let mut c = Self::default();
        for r in c.ranges_mut() {
            r.enabled = false;
        }
        c.obs_delay.enabled = false;
        c.p_flip = 0.0;
        c
    }

    fn ranges_mut(&mut self) -> [&mut Range; 10] {
        [
            &mut self.knob_friction,
            &mut self.hinge_stiffness,
            &mut self.hinge_damping,
            &mut self.hinge_friction_loss,
            &mut self.door_mass,
            &mut self.knob_mass,
            &mut self.table_offset_x,
            &mut self.table_offset_y,
            &mut self.obs_noise,
            &mut self.action_noise,
        ]
    }

    pub fn named_ranges(&self) -> [(&'static str, Range); 10] {
        [
            ("knob_friction", self.knob_friction),
            ("hinge_stiffness", self.hinge_stiffness),
            ("hinge_damping", self.hinge_damping),
            ("hinge_friction_loss", self.hinge_friction_loss),
            ("door_mass", self.door_mass),
            ("knob_mass", self.knob_mass),
            ("table_offset_x", self.table_offset_x),
            ("table_offset_y", self.table_offset_y),
            ("obs_noise", self.obs_noise),
            ("action_noise", self.action_noise),
        ]
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, r) in self.named_ranges() {
            if !r.is_valid() {
                return Err(format!("range {name} must satisfy low <= high, got [{}, {}]", r.low, r.high));
            }
        }
        if !(0.0..=1.0).contains(&self.p_flip) {
            return Err(format!("p_flip must lie in [0, 1], got {}", self.p_flip));
        }
        if !(0.0..=1.0).contains(&self.obs_delay.probability) {
            return Err(format!(
                "obs_delay.probability must lie in [0, 1], got {}",
                self.obs_delay.probability
            ));
        }
        Ok(())
    }
}

/// Per-episode dynamics; fields of disabled ranges take the nominal values.
pub fn sample_env_params<R: Rng + ?Sized>(cfg: &RandConfig, rng: &mut R) -> EnvParams {
    let n = &cfg.nominal;
    EnvParams {
        knob_friction: cfg.knob_friction.sample(n.knob_friction, rng),
        hinge_stiffness: cfg.hinge_stiffness.sample(n.hinge_stiffness, rng),
        hinge_damping: cfg.hinge_damping.sample(n.hinge_damping, rng),
        hinge_friction_loss: cfg.hinge_friction_loss.sample(n.hinge_friction_loss, rng),
        door_mass: cfg.door_mass.sample(n.door_mass, rng),
        knob_mass: cfg.knob_mass.sample(n.knob_mass, rng),
        table_offset_x: cfg.table_offset_x.sample(n.table_offset_x, rng),
        table_offset_y: cfg.table_offset_y.sample(n.table_offset_y, rng),
    }
}

/// Past perturbed observations, newest last.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DelayBuffer {
    history: VecDeque<Vec<f64>>,
    capacity: usize,
}

impl DelayBuffer {
    pub fn new(max_delay: usize) -> Self {
        Self {
            history: VecDeque::with_capacity(max_delay + 1),
            capacity: max_delay + 1,
        }
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }

    /// Stores `obs` and returns the observation `delay` steps back, or the
    /// oldest stored one early in an episode.
    pub fn push_and_read(&mut self, obs: Vec<f64>, delay: usize) -> Vec<f64> {
        if self.history.len() == self.capacity.max(1) {
            self.history.pop_front();
        }
        self.history.push_back(obs);
        let back = delay.min(self.history.len() - 1);
        self.history[self.history.len() - 1 - back].clone()
    }
}

/// Adds uniform noise to the proprioceptive components and applies the
/// per-step delay. Tactile components are never altered here.
pub fn perturb_observation<R: Rng + ?Sized>(
    obs: &[f64],
    cfg: &RandConfig,
    delay: &mut DelayBuffer,
    extra_delay: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut noisy = obs.to_vec();
    if cfg.obs_noise.active() {
        for x in noisy.iter_mut().take(PROPRIO_DIM) {
            *x += cfg.obs_noise.sample(0.0, rng);
        }
    }
    let bit = cfg.obs_delay.enabled && rng.random_bool(cfg.obs_delay.probability);
    delay.push_and_read(noisy, extra_delay + usize::from(bit))
}

/// [`perturb_observation`] with separate streams for noise and delay.
pub fn perturb_observation_split<R: Rng + ?Sized, D: Rng + ?Sized>(
    obs: &[f64],
    cfg: &RandConfig,
    delay: &mut DelayBuffer,
    extra_delay: usize,
    noise_rng: &mut R,
    delay_rng: &mut D,
) -> Vec<f64> {
    let mut noisy = obs.to_vec();
    if cfg.obs_noise.active() {
        for x in noisy.iter_mut().take(PROPRIO_DIM) {
            *x += cfg.obs_noise.sample(0.0, noise_rng);
        }
    }
    let bit = cfg.obs_delay.enabled && delay_rng.random_bool(cfg.obs_delay.probability);
    delay.push_and_read(noisy, extra_delay + usize::from(bit))
}

/// Uniform noise on the joint components, gripper untouched, then clipped.
pub fn perturb_action<R: Rng + ?Sized>(action: &[f64], cfg: &RandConfig, rng: &mut R) -> Vec<f64> {
    let mut out = action.to_vec();
    if cfg.action_noise.active() {
        for x in out.iter_mut().take(ACTION_DIM - 1) {
            *x += cfg.action_noise.sample(0.0, rng);
        }
    }
    for x in out.iter_mut() {
        *x = x.clamp(-1.0, 1.0);
    }
    out
}

/// Held-out evaluation conditions outside the training distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferDomain {
    pub hinge_stiffness: f64,
    pub knob_friction: f64,
    pub contact_stiffness_scale: f64,
    /// Constant bias on the tool and knob position components (m).
    pub observation_bias: f64,
    /// Fixed observation delay in steps.
    pub observation_delay: usize,
}

impl Default for TransferDomain {
    fn default() -> Self {
        Self {
            hinge_stiffness: 0.9,
            knob_friction: 0.75,
            contact_stiffness_scale: 0.5,
            observation_bias: 0.002,
            observation_delay: 2,
        }
    }
}

/// Observation-side shifts that the training channels do not model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObservationShift {
    pub position_bias: f64,
    pub fixed_delay: usize,
}

/// A door environment wrapped in every per-step randomization channel.
pub struct RandomizedEnv {
    env: DoorEnv,
    cfg: RandConfig,
    shift: ObservationShift,
    delay: DelayBuffer,
    obs_rng: StreamRng,
    delay_rng: StreamRng,
    action_rng: StreamRng,
    flip_rng: StreamRng,
}

impl RandomizedEnv {
    pub fn new(env: DoorEnv, cfg: RandConfig, shift: ObservationShift) -> Self {
        Self {
            env,
            delay: DelayBuffer::new(shift.fixed_delay + 1),
            shift,
            obs_rng: stream(0, 0, Purpose::ObservationNoise),
            delay_rng: stream(0, 0, Purpose::Delay),
            action_rng: stream(0, 0, Purpose::ActionNoise),
            flip_rng: stream(0, 0, Purpose::Flip),
            cfg,
        }
    }

    pub fn inner(&self) -> &DoorEnv {
        &self.env
    }

    pub fn rand_config(&self) -> &RandConfig {
        &self.cfg
    }

    fn perturb(&mut self, clean: Vec<f64>) -> Vec<f64> {
        let mut obs = clean;
        if obs.len() > PROPRIO_DIM && self.cfg.p_flip > 0.0 {
            let mut bits = [false; UNITS];
            for (b, x) in bits.iter_mut().zip(&obs[PROPRIO_DIM..]) {
                *b = *x > 0.5;
            }
            let flipped = flip_bits(&bits, self.cfg.p_flip, &mut self.flip_rng);
            for (x, b) in obs[PROPRIO_DIM..].iter_mut().zip(flipped) {
                *x = if b { 1.0 } else { 0.0 };
            }
        }
        if self.shift.position_bias != 0.0 {
            for i in (OBS_EE_POS..OBS_EE_POS + 3).chain(OBS_KNOB_REL..OBS_KNOB_REL + 3) {
                obs[i] += self.shift.position_bias;
            }
        }
        perturb_observation_split(
            &obs,
            &self.cfg,
            &mut self.delay,
            self.shift.fixed_delay,
            &mut self.obs_rng,
            &mut self.delay_rng,
        )
    }

    /// Starts an episode; every per-step stream is derived from `episode_seed`.
    pub fn reset(&mut self, params: EnvParams, episode_seed: u64) -> Result<Vec<f64>, EnvError> {
        self.obs_rng = stream(episode_seed, 0, Purpose::ObservationNoise);
        self.delay_rng = stream(episode_seed, 0, Purpose::Delay);
        self.action_rng = stream(episode_seed, 0, Purpose::ActionNoise);
        self.flip_rng = stream(episode_seed, 0, Purpose::Flip);
        self.delay.clear();
        let clean = self.env.reset(params, episode_seed)?;
        Ok(self.perturb(clean))
    }

    /// Steps with a noised action. The reward sees the true tactile bits.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if action.len() != ACTION_DIM {
            return Err(EnvError::ActionDim(action.len()));
        }
        let noisy = perturb_action(action, &self.cfg, &mut self.action_rng);
        let mut result = self.env.step(&noisy)?;
        result.observation = self.perturb(std::mem::take(&mut result.observation));
        Ok(result)
    }
}

/// Episode-level door task: samples dynamics at every reset.
pub struct DoorTask {
    env: RandomizedEnv,
    params: EnvParams,
}

impl DoorTask {
    pub fn new(env: RandomizedEnv) -> Self {
        let params = env.cfg.nominal;
        Self { env, params }
    }

    pub fn inner(&self) -> &RandomizedEnv {
        &self.env
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }
}

impl Environment for DoorTask {
    fn observation_dim(&self) -> usize {
        self.env.env.observation_dim()
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn reset(&mut self, episode_seed: u64) -> Vec<f64> {
        let mut rng = stream(episode_seed, 0, Purpose::Dynamics);
        self.params = sample_env_params(&self.env.cfg, &mut rng);
        self.env
            .reset(self.params, episode_seed)
            .expect("sampled parameters are valid")
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        let r = self
            .env
            .step(action)
            .expect("trainer only steps live episodes with full actions");
        EnvStep {
            observation: r.observation,
            reward: r.reward,
            done: r.done,
            terminal: r.info.terminal,
            reward_terms: r.info.reward.weighted_terms(self.env.env.weights()),
            progress: r.info.door.hinge_angle.to_degrees(),
            grasp: r.info.contact.knob_in_grasp,
            active_units: r.info.tactile.bits,
        }
    }

    fn episode_params(&self) -> Option<EnvParams> {
        Some(self.params)
    }

    fn step_budget(&self) -> Option<usize> {
        Some(self.env.env.config().max_steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_and_disabled_ranges() {
        let mut cfg = RandConfig::default();
        cfg.door_mass = Range::new(70.0, 70.0);
        cfg.knob_mass.enabled = false;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = sample_env_params(&cfg, &mut rng);
        assert_eq!(p.door_mass, 70.0);
        assert_eq!(p.knob_mass, cfg.nominal.knob_mass);
        let p = sample_env_params(&RandConfig::disabled(), &mut rng);
        assert_eq!(p, EnvParams::default());
    }

    #[test]
    fn delay_returns_previous_observation() {
        let mut buf = DelayBuffer::new(1);
        assert_eq!(buf.push_and_read(vec![0.0], 1), vec![0.0]);
        assert_eq!(buf.push_and_read(vec![1.0], 0), vec![1.0]);
        assert_eq!(buf.push_and_read(vec![2.0], 1), vec![1.0]);
        assert_eq!(buf.push_and_read(vec![3.0], 1), vec![2.0]);
    }

    #[test]
    fn identity_without_noise_or_delay() {
        let cfg = RandConfig::disabled();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = DelayBuffer::new(1);
        let obs: Vec<f64> = (0..55).map(|i| i as f64 * 0.1).collect();
        assert_eq!(perturb_observation(&obs, &cfg, &mut buf, 0, &mut rng), obs);
        let a = vec![0.5, -0.2, 0.0, 1.0, -1.0, 0.3, 0.9, -0.7];
        assert_eq!(perturb_action(&a, &cfg, &mut rng), a);
    }

    #[test]
    fn action_noise_spares_gripper_and_clips() {
        let cfg = RandConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = [1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.37];
        for _ in 0..1000 {
            let out = perturb_action(&a, &cfg, &mut rng);
            assert_eq!(out[7], 0.37);
            assert!(out.iter().all(|x| (-1.0..=1.0).contains(x)));
            assert!((out[2]).abs() <= 0.01);
        }
    }
}
