//! Shaped per-step reward.
//!
//! `R = w_door·r_door + w_dist·r_dist + w_ori·r_ori + w_grasp·r_grasp
//! + w_tactile·r_tactile` with
//!
//! - `r_door = α` (radians) while grasping, else 0
//! - `r_dist = −1 − tanh‖x_knob − x_gripper‖`
//! - `r_ori = −1 − tanh‖enc(θ_t) − enc(θ_g)‖` with the sine-cosine encoding
//! - `r_grasp = 1` while grasping, else 0
//! - `r_tactile = ‖ĉ‖₁` while grasping with `α > α₀`, else 0

use serde::{Deserialize, Serialize};

use crate::tactile::{UnitBits, UNITS};

/// Opening angle (1.15°) above which active tactile units are rewarded.
pub const ALPHA0: f64 = 1.15 * std::f64::consts::PI / 180.0;

pub const TERM_NAMES: [&str; 5] = ["door", "dist", "ori", "grasp", "tactile"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub w_door: f64,
    pub w_dist: f64,
    pub w_ori: f64,
    pub w_grasp: f64,
    pub w_tactile: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_door: 5.0,
            w_dist: 0.4,
            w_ori: 0.05,
            w_grasp: 0.1,
            w_tactile: 0.01,
        }
    }
}

impl RewardWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.w_door, self.w_dist, self.w_ori, self.w_grasp, self.w_tactile]
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.as_array().iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err("reward weights must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub alpha: f64,
    pub grasp: bool,
    pub x_knob: [f64; 3],
    pub x_gripper: [f64; 3],
    pub theta_g: [f64; 3],
    pub theta_t: [f64; 3],
    pub c_hat: UnitBits,
}

/// Unweighted terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub door: f64,
    pub dist: f64,
    pub ori: f64,
    pub grasp: f64,
    pub tactile: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn terms(&self) -> [f64; 5] {
        [self.door, self.dist, self.ori, self.grasp, self.tactile]
    }

    pub fn weighted_terms(&self, w: &RewardWeights) -> [f64; 5] {
        let t = self.terms();
        let w = w.as_array();
        std::array::from_fn(|i| w[i] * t[i])
    }
}

/// `(sin θ₁, sin θ₂, sin θ₃, cos θ₁, cos θ₂, cos θ₃)`.
pub fn sincos_encode(theta: [f64; 3]) -> [f64; 6] {
    let (s0, c0) = theta[0].sin_cos();
    let (s1, c1) = theta[1].sin_cos();
    let (s2, c2) = theta[2].sin_cos();
    [s0, s1, s2, c0, c1, c2]
}

fn norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn compute(inputs: &RewardInputs, weights: &RewardWeights) -> RewardBreakdown {
    let door = if inputs.grasp { inputs.alpha } else { 0.0 };
    let dist = -1.0 - norm((0..3).map(|i| inputs.x_knob[i] - inputs.x_gripper[i])).tanh();
    let et = sincos_encode(inputs.theta_t);
    let eg = sincos_encode(inputs.theta_g);
    let ori = -1.0 - norm((0..6).map(|i| et[i] - eg[i])).tanh();
    let grasp = if inputs.grasp { 1.0 } else { 0.0 };
    let tactile = if inputs.grasp && inputs.alpha > ALPHA0 {
        inputs.c_hat.iter().filter(|&&b| b).count() as f64
    } else {
        0.0
    };
    let mut b = RewardBreakdown {
        door,
        dist,
        ori,
        grasp,
        tactile,
        total: 0.0,
    };
    b.total = b.weighted_terms(weights).iter().sum();
    b
}

/// Running compensated (Neumaier) sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Episode totals: return and weighted per-term sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeTotals {
    total: CompensatedSum,
    terms: [CompensatedSum; 5],
}

impl EpisodeTotals {
    pub fn add(&mut self, b: &RewardBreakdown, w: &RewardWeights) {
        self.total.add(b.total);
        for (acc, t) in self.terms.iter_mut().zip(b.weighted_terms(w)) {
            acc.add(t);
        }
    }

    pub fn total(&self) -> f64 {
        self.total.value()
    }

    pub fn weighted_terms(&self) -> [f64; 5] {
        std::array::from_fn(|i| self.terms[i].value())
    }
}

/// Largest possible weighted tactile contribution over an episode.
pub fn max_tactile_episode_contribution(max_steps: usize, w: &RewardWeights) -> f64 {
    let mut s = CompensatedSum::default();
    for _ in 0..max_steps {
        s.add(w.w_tactile * UNITS as f64);
    }
    s.value()
}
