//! Scripted grasp-and-pull controller used as a regression trajectory.
//!
//! The script drives the tool point with a resolved-rate controller: a
//! desired Cartesian twist is mapped to joint velocities through a damped
//! least-squares inverse of the arm Jacobian and normalized into actions.

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, Vector3};

use super::kinematics::JOINTS;
use super::{facing_rotation, DoorEnv, EnvError, StepResult, ACTION_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Approach,
    Close,
    /// Pulling while static friction still holds the door.
    Preload,
    Pull,
}

#[derive(Debug, Clone)]
pub struct FixtureStep {
    pub phase: Phase,
    pub action: [f64; ACTION_DIM],
    pub result: StepResult,
}

#[derive(Debug, Clone, Copy)]
pub struct ScriptConfig {
    pub approach_steps: usize,
    pub close_steps: usize,
    pub pull_steps: usize,
    /// Gripper width at which closing stops (m).
    pub squeeze_width: f64,
    /// Tool speed along the door's opening direction during the pull (m/s).
    pub pull_speed: f64,
    pub position_gain: f64,
    pub orientation_gain: f64,
}

impl Default for ScriptConfig {
    fn default() -> Self {
        Self {
            approach_steps: 80,
            close_steps: 80,
            pull_steps: 150,
            squeeze_width: 0.014,
            pull_speed: 0.05,
            position_gain: 4.0,
            orientation_gain: 4.0,
        }
    }
}

/// Joint velocities realising the tool twist `(v, ω)`.
pub fn resolved_rate(env: &DoorEnv, v: Vector3<f64>, w: Vector3<f64>) -> [f64; JOINTS] {
    let jac = env.config().arm.jacobian(&env.arm_state().joint_pos);
    let twist = SVector::<f64, 6>::new(v.x, v.y, v.z, w.x, w.y, w.z);
    let damping = 1e-2;
    let jjt = jac * jac.transpose() + SMatrix::<f64, 6, 6>::identity() * damping * damping;
    let y = jjt.lu().solve(&twist).unwrap_or_else(SVector::zeros);
    let qd = jac.transpose() * y;
    std::array::from_fn(|i| qd[i])
}

fn action_for(env: &DoorEnv, v: Vector3<f64>, target_rot: &Matrix3<f64>, gain: f64, grip: f64) -> [f64; ACTION_DIM] {
    let rot = env.tool_pose().rotation;
    let err = Rotation3::from_matrix_unchecked(target_rot * rot.transpose()).scaled_axis();
    let qd = resolved_rate(env, v, err * gain);
    let mut a = [0.0; ACTION_DIM];
    for j in 0..JOINTS {
        a[j] = qd[j] / env.config().joint_vel_limit[j];
    }
    // Scale the whole command so saturation keeps the twist direction.
    let peak = a[..JOINTS].iter().fold(1.0f64, |m, x| m.max(x.abs()));
    for x in &mut a[..JOINTS] {
        *x /= peak;
    }
    a[JOINTS] = grip;
    a
}

/// Runs the scripted grasp-and-pull on an environment that was just reset.
pub fn grasp_and_pull(env: &mut DoorEnv, cfg: &ScriptConfig) -> Result<Vec<FixtureStep>, EnvError> {
    let mut log = Vec::new();
    let mut phase = Phase::Approach;
    let mut phase_steps = 0usize;
    loop {
        let knob = env.knob();
        let tcp = env.tool_pose().position;
        let alpha = env.door_state().hinge_angle;
        let door_rot = Matrix3::from(Rotation3::from_axis_angle(&Vector3::z_axis(), alpha));
        let target_rot = door_rot * facing_rotation();
        let to_knob = knob.center - tcp;
        let (v, grip) = match phase {
            Phase::Approach => (to_knob * cfg.position_gain, 0.0),
            Phase::Close => {
                let width = env.arm_state().gripper_width;
                let grip = if width > cfg.squeeze_width { -1.0 } else { 0.0 };
                (to_knob * cfg.position_gain, grip)
            }
            Phase::Preload | Phase::Pull => {
                let (s, c) = alpha.sin_cos();
                // Direction in which the knob moves as the door opens.
                let opening = Vector3::new(-c, -s, 0.0);
                (opening * cfg.pull_speed + to_knob * cfg.position_gain, 0.0)
            }
        };
        let action = action_for(env, v, &target_rot, cfg.orientation_gain, grip);
        let result = env.step(&action)?;
        let done = result.done;
        let moved = result.info.door.hinge_angle > alpha;
        log.push(FixtureStep {
            phase,
            action,
            result,
        });
        if done {
            break;
        }
        phase_steps += 1;
        phase = match phase {
            Phase::Approach if phase_steps >= cfg.approach_steps => {
                phase_steps = 0;
                Phase::Close
            }
            Phase::Close if phase_steps >= cfg.close_steps => {
                phase_steps = 0;
                Phase::Preload
            }
            Phase::Preload if moved => Phase::Pull,
            Phase::Preload if phase_steps >= cfg.pull_steps => break,
            Phase::Pull if phase_steps >= cfg.pull_steps => break,
            p => p,
        };
    }
    Ok(log)
}
