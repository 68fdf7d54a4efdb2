//! One-degree-of-freedom door hinge.
//!
//! The hinge obeys `I·α̈ = τ − k·α − b·α̇ − τ_f·sign(α̇)` on `α ∈ [0, π/2]`.
//! Each step is backward Euler in velocity with the spring, damper and dry
//! friction all taken at the new state, then a position update with the new
//! velocity. Because every dissipative and restoring term is implicit, the
//! mechanical energy `½Iα̇² + ½kα²` never grows without input torque.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

pub const MAX_ANGLE: f64 = FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DoorState {
    /// Radians, in `[0, π/2]`.
    pub hinge_angle: f64,
    pub hinge_vel: f64,
}

/// Coefficients of the hinge law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeDynamics {
    pub inertia: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub friction_loss: f64,
}

impl HingeDynamics {
    pub fn energy(&self, door: &DoorState) -> f64 {
        0.5 * self.inertia * door.hinge_vel * door.hinge_vel
            + 0.5 * self.stiffness * door.hinge_angle * door.hinge_angle
    }
}

pub fn hinge_step(door: DoorState, applied_torque: f64, dyn_: &HingeDynamics, dt: f64) -> DoorState {
    assert!(dt > 0.0, "dt must be positive, got {dt}");
    let HingeDynamics {
        inertia,
        stiffness,
        damping,
        friction_loss,
    } = *dyn_;
    let denom = inertia + dt * damping + dt * dt * stiffness;
    let free = (inertia * door.hinge_vel + dt * (applied_torque - stiffness * door.hinge_angle)) / denom;
    // Dry friction as a set-valued force: stick when it can absorb the whole
    // free velocity, otherwise it removes a fixed amount.
    let stick = dt * friction_loss / denom;
    let mut vel = if free.abs() <= stick {
        0.0
    } else {
        free - stick * free.signum()
    };
    let mut angle = door.hinge_angle + dt * vel;
    if angle <= 0.0 {
        angle = 0.0;
        vel = vel.max(0.0);
    } else if angle >= MAX_ANGLE {
        angle = MAX_ANGLE;
        vel = vel.min(0.0);
    }
    DoorState {
        hinge_angle: angle,
        hinge_vel: vel,
    }
}
