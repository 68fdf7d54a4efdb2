//! Door-opening environment.
//!
//! The arm is kinematic: commanded joint velocities integrate exactly within
//! joint limits. The door is the only dynamic body. Contacts between finger
//! pads and knob are evaluated once per step on the pre-step door state and
//! their torque drives the hinge.
//!
//! World frame: arm base at the origin, `x` toward the door, `z` up. The
//! closed door surface is the plane `x = hinge_x` and the door swings toward
//! the arm about a vertical axis through `(hinge_x, hinge_y)`.
//!
//! Observation layout (indices into the policy vector):
//!
//! | range   | content                         |
//! |---------|---------------------------------|
//! | 0..3    | tool point position (m)         |
//! | 3..6    | tool point velocity (m/s)       |
//! | 6..13   | joint positions (rad)           |
//! | 13..20  | joint velocities (rad/s)        |
//! | 20      | gripper width (m)               |
//! | 21..24  | knob centre minus tool point (m)|
//! | 24      | hinge angle (rad)               |
//! | 25..55  | tactile bits, only with tactile |

pub mod contact;
pub mod fixtures;
pub mod hinge;
pub mod kinematics;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::{self, RewardBreakdown, RewardInputs, RewardWeights};
use crate::rng::{stream, Purpose};
use crate::tactile::{bits_as_f64, TactileConfig, TactileFrame, UNITS};
use contact::{compute_contacts, ContactConfig, ContactResult, GraspAnchor, GripperPose, KnobBox};
use hinge::{hinge_step, DoorState, HingeDynamics, MAX_ANGLE};
use kinematics::{rotation_to_rpy, ArmGeometry, JointVector, Pose, JOINTS};

use rand::Rng;

pub const PROPRIO_DIM: usize = 25;
pub const TACTILE_OBS_DIM: usize = PROPRIO_DIM + UNITS;
pub const ACTION_DIM: usize = JOINTS + 1;

pub const OBS_EE_POS: usize = 0;
pub const OBS_EE_VEL: usize = 3;
pub const OBS_JOINT_POS: usize = 6;
pub const OBS_JOINT_VEL: usize = 13;
pub const OBS_GRIPPER: usize = 20;
pub const OBS_KNOB_REL: usize = 21;
pub const OBS_HINGE: usize = 24;
pub const OBS_TACTILE: usize = 25;

/// Observation column names in layout order.
pub fn observation_names(tactile: bool) -> Vec<String> {
    let mut names: Vec<String> = Vec::with_capacity(TACTILE_OBS_DIM);
    for axis in ["x", "y", "z"] {
        names.push(format!("ee_pos_{axis}"));
    }
    for axis in ["x", "y", "z"] {
        names.push(format!("ee_vel_{axis}"));
    }
    for j in 1..=JOINTS {
        names.push(format!("joint_pos_{j}"));
    }
    for j in 1..=JOINTS {
        names.push(format!("joint_vel_{j}"));
    }
    names.push("gripper_width".into());
    for axis in ["x", "y", "z"] {
        names.push(format!("knob_rel_{axis}"));
    }
    names.push("hinge_angle".into());
    if tactile {
        for u in 1..=UNITS {
            names.push(format!("tactile_{u}"));
        }
    }
    names
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("step called after the episode ended")]
    StepAfterDone,
    #[error("action has {0} components, expected {ACTION_DIM}")]
    ActionDim(usize),
    #[error("action component {0} is not finite")]
    NonFiniteAction(usize),
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("home pose not reachable (pose error {0:.3e})")]
    HomeUnreachable(f64),
}

/// Door, knob and table layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoorGeometry {
    pub hinge_x: f64,
    pub hinge_y: f64,
    /// Height of the knob centre above the arm base (m).
    pub knob_height: f64,
    pub width: f64,
    /// Distance from the hinge axis to the knob along the door (m).
    pub knob_radius: f64,
    /// Distance of the knob centre in front of the door surface (m).
    pub knob_standoff: f64,
    /// Knob half extents along the door normal, along the door, and vertically.
    pub knob_half_extents: [f64; 3],
}

impl Default for DoorGeometry {
    fn default() -> Self {
        Self {
            hinge_x: 0.75,
            hinge_y: -0.35,
            knob_height: 0.72,
            width: 0.4,
            knob_radius: 0.35,
            knob_standoff: 0.05,
            knob_half_extents: [0.02, 0.01, 0.01],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub arm: ArmGeometry,
    /// Joint speed reached at a normalized command of 1 (rad/s).
    pub joint_vel_limit: [f64; JOINTS],
    /// Gripper width rate at a normalized command of 1 (m/s).
    pub gripper_rate: f64,
    pub gripper_max_width: f64,
    /// Distance of the home tool point in front of the knob centre (m).
    pub home_standoff: f64,
    /// Half width of the uniform per-joint perturbation at reset (rad).
    pub home_perturbation: f64,
    pub door: DoorGeometry,
    pub contact: ContactConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            max_steps: 300,
            arm: ArmGeometry::default(),
            joint_vel_limit: [2.175, 2.175, 2.175, 2.175, 2.61, 2.61, 2.61],
            gripper_rate: 0.1,
            gripper_max_width: 0.08,
            home_standoff: 0.08,
            home_perturbation: 0.02,
            door: DoorGeometry::default(),
            contact: ContactConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.joint_vel_limit.iter().any(|v| !(*v > 0.0)) {
            return bad("joint velocity limits must be positive");
        }
        if !(self.gripper_rate > 0.0 && self.gripper_max_width > 0.0) {
            return bad("gripper rate and maximum width must be positive");
        }
        if !(self.contact.stiffness > 0.0 && self.contact.pad_thickness > 0.0) {
            return bad("contact stiffness and pad thickness must be positive");
        }
        if self.door.knob_half_extents.iter().any(|h| !(*h > 0.0)) {
            return bad("knob extents must be positive");
        }
        if !(self.door.width > 0.0 && self.door.knob_radius > 0.0) {
            return bad("door width and knob radius must be positive");
        }
        Ok(())
    }
}

/// Randomizable dynamics of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvParams {
    pub knob_friction: f64,
    pub hinge_stiffness: f64,
    pub hinge_damping: f64,
    pub hinge_friction_loss: f64,
    pub door_mass: f64,
    pub knob_mass: f64,
    pub table_offset_x: f64,
    pub table_offset_y: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            knob_friction: 0.9,
            hinge_stiffness: 0.45,
            hinge_damping: 0.2,
            hinge_friction_loss: 0.5,
            door_mass: 100.0,
            knob_mass: 6.0,
            table_offset_x: 0.0,
            table_offset_y: 0.0,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("knob_friction", self.knob_friction),
            ("door_mass", self.door_mass),
            ("knob_mass", self.knob_mass),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnvError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("hinge_stiffness", self.hinge_stiffness),
            ("hinge_damping", self.hinge_damping),
            ("hinge_friction_loss", self.hinge_friction_loss),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(EnvError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.table_offset_x.is_finite() && self.table_offset_y.is_finite()) {
            return Err(EnvError::Config("table offsets must be finite".into()));
        }
        Ok(())
    }

    pub fn hinge_dynamics(&self, door: &DoorGeometry) -> HingeDynamics {
        HingeDynamics {
            inertia: self.door_mass * door.width * door.width / 3.0
                + self.knob_mass * door.knob_radius * door.knob_radius,
            stiffness: self.hinge_stiffness,
            damping: self.hinge_damping,
            friction_loss: self.hinge_friction_loss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmState {
    pub joint_pos: JointVector,
    pub joint_vel: JointVector,
    pub gripper_width: f64,
}

/// Everything reported alongside a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub step: usize,
    pub contact: ContactResult,
    pub door: DoorState,
    pub reward: RewardBreakdown,
    /// The door reached its open limit.
    pub terminal: bool,
    /// Tactile bits before any randomization.
    pub tactile: TactileFrame,
    /// Torque the contacts applied to the door this step (N·m).
    pub door_torque: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Hinge axis position for the given table offsets.
pub fn hinge_point(door: &DoorGeometry, params: &EnvParams) -> Vector3<f64> {
    Vector3::new(
        params.table_offset_x + door.hinge_x,
        params.table_offset_y + door.hinge_y,
        door.knob_height,
    )
}

/// Knob box at hinge angle `alpha`.
pub fn knob_box(door: &DoorGeometry, params: &EnvParams, alpha: f64) -> KnobBox {
    let (s, c) = alpha.sin_cos();
    let along = Vector3::new(-s, c, 0.0);
    let normal = Vector3::new(-c, -s, 0.0);
    let up = Vector3::z();
    let local = along * door.knob_radius + normal * door.knob_standoff;
    let center = Vector3::new(
        params.table_offset_x + (door.hinge_x + local.x),
        params.table_offset_y + (door.hinge_y + local.y),
        door.knob_height,
    );
    KnobBox {
        center,
        rotation: Matrix3::from_columns(&[normal, along, up]),
        half_extents: door.knob_half_extents,
    }
}

/// Tool orientation that faces the closed door with the fingers closing
/// vertically: approach along +x, closing axis along +z.
pub fn facing_rotation() -> Matrix3<f64> {
    Matrix3::from_columns(&[Vector3::y(), Vector3::z(), Vector3::x()])
}

pub struct DoorEnv {
    config: EnvConfig,
    tactile: TactileConfig,
    kappa: [f64; UNITS],
    weights: RewardWeights,
    home: JointVector,
    target_rpy: [f64; 3],
    params: EnvParams,
    hinge: HingeDynamics,
    arm: ArmState,
    door: DoorState,
    anchor: Option<GraspAnchor>,
    tool: Pose,
    tool_vel: Vector3<f64>,
    last_frame: TactileFrame,
    step: usize,
    done: bool,
    ready: bool,
}

impl DoorEnv {
    pub fn new(
        config: EnvConfig,
        tactile: TactileConfig,
        weights: RewardWeights,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        tactile.validate().map_err(EnvError::Config)?;
        let home = home_pose(&config)?;
        let target_rpy = rotation_to_rpy(&facing_rotation());
        let params = EnvParams::default();
        let tool = config.arm.forward_kinematics(&home);
        let kappa = tactile.kappa_array();
        Ok(Self {
            hinge: params.hinge_dynamics(&config.door),
            kappa,
            home,
            target_rpy,
            params,
            arm: ArmState {
                joint_pos: home,
                joint_vel: [0.0; JOINTS],
                gripper_width: config.gripper_max_width,
            },
            door: DoorState::default(),
            anchor: None,
            tool,
            tool_vel: Vector3::zeros(),
            last_frame: TactileFrame::from_forces(&[0.0; UNITS], tactile.scale, &kappa),
            step: 0,
            done: false,
            ready: false,
            config,
            tactile,
            weights,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn weights(&self) -> &RewardWeights {
        &self.weights
    }

    pub fn tactile_config(&self) -> &TactileConfig {
        &self.tactile
    }

    pub fn observation_dim(&self) -> usize {
        if self.tactile.enabled {
            TACTILE_OBS_DIM
        } else {
            PROPRIO_DIM
        }
    }

    pub fn home_joints(&self) -> JointVector {
        self.home
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn arm_state(&self) -> &ArmState {
        &self.arm
    }

    pub fn door_state(&self) -> &DoorState {
        &self.door
    }

    pub fn tool_pose(&self) -> &Pose {
        &self.tool
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn gripper_pose(&self) -> GripperPose {
        GripperPose {
            tcp: self.tool.position,
            rotation: self.tool.rotation,
            width: self.arm.gripper_width,
        }
    }

    pub fn knob(&self) -> KnobBox {
        knob_box(&self.config.door, &self.params, self.door.hinge_angle)
    }

    pub fn hinge_point(&self) -> Vector3<f64> {
        hinge_point(&self.config.door, &self.params)
    }

    /// Starts an episode with the given dynamics. The arm starts at the home
    /// pose plus a uniform per-joint perturbation drawn from `seed`.
    pub fn reset(&mut self, params: EnvParams, seed: u64) -> Result<Vec<f64>, EnvError> {
        params.validate()?;
        let mut rng = stream(seed, 0, Purpose::ResetPerturbation);
        let mut q = self.home;
        let h = self.config.home_perturbation;
        for qi in q.iter_mut() {
            if h > 0.0 {
                *qi += rng.random_range(-h..=h);
            }
        }
        self.config.arm.clamp_joints(&mut q);
        self.params = params;
        self.hinge = params.hinge_dynamics(&self.config.door);
        self.arm = ArmState {
            joint_pos: q,
            joint_vel: [0.0; JOINTS],
            gripper_width: self.config.gripper_max_width,
        };
        self.door = DoorState::default();
        self.anchor = None;
        self.tool = self.config.arm.forward_kinematics(&q);
        self.tool_vel = Vector3::zeros();
        let contact = contact::normal_contacts(
            &self.gripper_pose(),
            &self.knob(),
            &self.tactile.geometry,
            self.config.contact.stiffness,
            self.config.contact.pad_thickness,
        );
        self.last_frame =
            TactileFrame::from_forces(&contact.per_unit_force, self.tactile.scale, &self.kappa);
        self.step = 0;
        self.done = false;
        self.ready = true;
        Ok(self.observation())
    }

    /// Clean observation of the current state.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.observation_dim());
        obs.extend(self.tool.position.iter());
        obs.extend(self.tool_vel.iter());
        obs.extend(self.arm.joint_pos);
        obs.extend(self.arm.joint_vel);
        obs.push(self.arm.gripper_width);
        let rel = self.knob().center - self.tool.position;
        obs.extend(rel.iter());
        obs.push(self.door.hinge_angle);
        if self.tactile.enabled {
            obs.extend(bits_as_f64(&self.last_frame.bits));
        }
        obs
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if !self.ready {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if action.len() != ACTION_DIM {
            return Err(EnvError::ActionDim(action.len()));
        }
        if let Some(i) = action.iter().position(|a| !a.is_finite()) {
            return Err(EnvError::NonFiniteAction(i));
        }
        let dt = self.config.dt;
        let a: [f64; ACTION_DIM] = std::array::from_fn(|i| action[i].clamp(-1.0, 1.0));

        let arm = &self.config.arm;
        for j in 0..JOINTS {
            let vel = a[j] * self.config.joint_vel_limit[j];
            let next = self.arm.joint_pos[j] + dt * vel;
            let clamped = next.clamp(arm.joint_lower[j], arm.joint_upper[j]);
            self.arm.joint_vel[j] = if clamped == next { vel } else { 0.0 };
            self.arm.joint_pos[j] = clamped;
        }
        self.arm.gripper_width = (self.arm.gripper_width
            + a[JOINTS] * self.config.gripper_rate * dt)
            .clamp(0.0, self.config.gripper_max_width);

        let tool = arm.forward_kinematics(&self.arm.joint_pos);
        self.tool_vel = (tool.position - self.tool.position) / dt;
        self.tool = tool;

        let knob = self.knob();
        let contact = compute_contacts(
            &self.gripper_pose(),
            &knob,
            &self.tactile.geometry,
            &self.config.contact,
            self.params.knob_friction,
            &mut self.anchor,
            dt,
        );
        let lever = knob.center - self.hinge_point();
        let torque = lever.cross(&contact.force_on_knob).z;
        self.door = hinge_step(self.door, torque, &self.hinge, dt);
        self.step += 1;

        let frame =
            TactileFrame::from_forces(&contact.per_unit_force, self.tactile.scale, &self.kappa);
        self.last_frame = frame;
        let knob_after = self.knob();
        let inputs = RewardInputs {
            alpha: self.door.hinge_angle,
            grasp: contact.knob_in_grasp,
            x_knob: knob_after.center.into(),
            x_gripper: self.tool.position.into(),
            theta_g: self.tool.rpy(),
            theta_t: self.target_rpy,
            c_hat: frame.bits,
        };
        let breakdown = reward::compute(&inputs, &self.weights);
        let terminal = self.door.hinge_angle >= MAX_ANGLE;
        self.done = terminal || self.step >= self.config.max_steps;
        Ok(StepResult {
            observation: self.observation(),
            reward: breakdown.total,
            done: self.done,
            info: StepInfo {
                step: self.step,
                contact,
                door: self.door,
                reward: breakdown,
                terminal,
                tactile: frame,
                door_torque: torque,
            },
        })
    }
}

/// Joint configuration that places the tool `home_standoff` in front of the
/// closed-door knob, facing it.
pub fn home_pose(config: &EnvConfig) -> Result<JointVector, EnvError> {
    let knob = knob_box(&config.door, &EnvParams::default(), 0.0);
    let target = Pose {
        position: knob.center - Vector3::x() * config.home_standoff,
        rotation: facing_rotation(),
    };
    let seed = [0.0, -0.2, 0.0, -2.0, 0.0, 3.37, 0.0];
    let (q, err) = config.arm.inverse_kinematics(&target, &seed, 500);
    if !(err <= 1e-8) {
        return Err(EnvError::HomeUnreachable(err));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> DoorEnv {
        DoorEnv::new(EnvConfig::default(), TactileConfig::default(), RewardWeights::default()).unwrap()
    }

    #[test]
    fn layout_names_match_dims() {
        assert_eq!(observation_names(false).len(), PROPRIO_DIM);
        assert_eq!(observation_names(true).len(), TACTILE_OBS_DIM);
        assert_eq!(observation_names(true)[OBS_HINGE], "hinge_angle");
        assert_eq!(observation_names(true)[OBS_TACTILE], "tactile_1");
        assert_eq!(observation_names(true)[OBS_GRIPPER], "gripper_width");
    }

    #[test]
    fn step_before_reset_and_after_done_fail() {
        let mut e = env();
        assert_eq!(e.step(&[0.0; 8]), Err(EnvError::NotReset));
        let mut cfg = EnvConfig::default();
        cfg.max_steps = 1;
        let mut e = DoorEnv::new(cfg, TactileConfig::default(), RewardWeights::default()).unwrap();
        e.reset(EnvParams::default(), 0).unwrap();
        assert!(e.step(&[0.0; 8]).unwrap().done);
        assert_eq!(e.step(&[0.0; 8]), Err(EnvError::StepAfterDone));
    }

    #[test]
    fn home_pose_faces_the_knob() {
        let e = env();
        let pose = e.config.arm.forward_kinematics(&e.home);
        let knob = knob_box(&e.config.door, &EnvParams::default(), 0.0);
        let rel = knob.center - pose.position;
        assert!((rel - Vector3::x() * 0.08).norm() < 1e-8);
        assert!((pose.rotation - facing_rotation()).norm() < 1e-8);
    }
}
