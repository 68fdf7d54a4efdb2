//! One-dimensional reach task used to check that the learner improves.
//!
//! The state is `[pos, goal]`, the action moves `pos` by `0.1·a` and the
//! reward is `-|pos - goal|`. Episodes last a fixed number of steps.

use rand::Rng;

use super::{EnvStep, Environment};
use crate::rng::{stream, Purpose};

pub const STEP_SCALE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct ReachTask {
    pub horizon: usize,
    /// Goals are drawn uniformly from `[-goal_range, goal_range]`.
    pub goal_range: f64,
    /// Half width of the success region around the goal.
    pub tolerance: f64,
    pos: f64,
    goal: f64,
    steps: usize,
}

impl ReachTask {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            goal_range: 1.0,
            tolerance: 0.1,
            pos: 0.0,
            goal: 0.0,
            steps: 0,
        }
    }

    pub fn position(&self) -> f64 {
        self.pos
    }

    pub fn goal(&self) -> f64 {
        self.goal
    }

    pub fn in_goal_region(&self) -> bool {
        (self.pos - self.goal).abs() <= self.tolerance
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos, self.goal]
    }
}

impl Environment for ReachTask {
    fn observation_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, episode_seed: u64) -> Vec<f64> {
        let mut rng = stream(episode_seed, 0, Purpose::ResetPerturbation);
        self.goal = rng.random_range(-self.goal_range..=self.goal_range);
        self.pos = 0.0;
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        assert_eq!(action.len(), 1, "reach task takes one action");
        self.pos += STEP_SCALE * action[0].clamp(-1.0, 1.0);
        self.steps += 1;
        let reward = -(self.pos - self.goal).abs();
        EnvStep {
            observation: self.observation(),
            reward,
            done: self.steps >= self.horizon,
            terminal: false,
            reward_terms: [reward, 0.0, 0.0, 0.0, 0.0],
            progress: self.pos - self.goal,
            grasp: self.in_goal_region(),
            active_units: [false; crate::tactile::UNITS],
        }
    }

    fn step_budget(&self) -> Option<usize> {
        Some(self.horizon)
    }
}
