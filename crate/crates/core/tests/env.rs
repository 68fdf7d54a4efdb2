use nalgebra::{Matrix4, Vector3};
use proptest::prelude::*;

use tactile_door::env::fixtures::{grasp_and_pull, Phase, ScriptConfig};
use tactile_door::env::kinematics::{ArmGeometry, JointVector, JOINTS};
use tactile_door::env::{
    DoorEnv, EnvConfig, EnvParams, ACTION_DIM, OBS_KNOB_REL, OBS_TACTILE, PROPRIO_DIM, TACTILE_OBS_DIM,
};
use tactile_door::reward::RewardWeights;
use tactile_door::tactile::TactileConfig;

fn env_with(tactile: bool) -> DoorEnv {
    let t = TactileConfig {
        enabled: tactile,
        ..TactileConfig::default()
    };
    DoorEnv::new(EnvConfig::default(), t, RewardWeights::default()).unwrap()
}

fn rot_x(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, c, -s, 0.0, //
        0.0, s, c, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

fn rot_z(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(
        c, -s, 0.0, 0.0, //
        s, c, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

fn trans(x: f64, y: f64, z: f64) -> Matrix4<f64> {
    Matrix4::new_translation(&Vector3::new(x, y, z))
}

/// Product of homogeneous link transforms, evaluated independently of the
/// production kinematics.
fn chain(arm: &ArmGeometry, q: &JointVector) -> Matrix4<f64> {
    let mut t = Matrix4::<f64>::identity();
    for (link, &theta) in arm.links.iter().zip(q) {
        t = t * rot_x(link.alpha) * trans(link.a, 0.0, 0.0) * rot_z(theta) * trans(0.0, 0.0, link.d);
    }
    t * trans(0.0, 0.0, arm.flange_offset + arm.tool_offset) * rot_z(arm.tool_yaw)
}

fn joints_within(arm: &ArmGeometry) -> impl Strategy<Value = JointVector> {
    let ranges: Vec<_> = (0..JOINTS).map(|i| arm.joint_lower[i]..=arm.joint_upper[i]).collect();
    ranges.prop_map(|v| std::array::from_fn(|i| v[i]))
}

proptest! {
    #[test]
    fn forward_kinematics_matches_transform_chain(q in joints_within(&ArmGeometry::default())) {
        let arm = ArmGeometry::default();
        let pose = arm.forward_kinematics(&q);
        let t = chain(&arm, &q);
        for i in 0..3 {
            prop_assert!((pose.position[i] - t[(i, 3)]).abs() <= 1e-10);
            for j in 0..3 {
                prop_assert!((pose.rotation[(i, j)] - t[(i, j)]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn last_joint_spins_about_the_tool_point(q in joints_within(&ArmGeometry::default()), q7 in -2.8..2.8f64) {
        let arm = ArmGeometry::default();
        let mut turned = q;
        turned[JOINTS - 1] = q7;
        let a = arm.forward_kinematics(&q).position;
        let b = arm.forward_kinematics(&turned).position;
        prop_assert!((a - b).norm() <= 1e-12);
    }
}

#[test]
fn observation_has_25_or_55_components() {
    for (tactile, dim) in [(false, PROPRIO_DIM), (true, TACTILE_OBS_DIM)] {
        let mut e = env_with(tactile);
        assert_eq!(e.observation_dim(), dim);
        assert_eq!(e.reset(EnvParams::default(), 3).unwrap().len(), dim);
        assert_eq!(e.step(&[0.0; ACTION_DIM]).unwrap().observation.len(), dim);
    }
    assert_eq!(PROPRIO_DIM, 3 + 3 + 7 + 7 + 1 + 3 + 1);
}

#[test]
fn reset_is_seeded() {
    let mut e = env_with(true);
    let a = e.reset(EnvParams::default(), 11).unwrap();
    let b = e.reset(EnvParams::default(), 11).unwrap();
    let c = e.reset(EnvParams::default(), 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn table_offset_translates_the_knob() {
    let mut e = env_with(false);
    let a = e.reset(EnvParams::default(), 5).unwrap();
    let shifted = EnvParams {
        table_offset_x: 0.05,
        ..EnvParams::default()
    };
    let b = e.reset(shifted, 5).unwrap();
    assert_eq!(a[..OBS_KNOB_REL], b[..OBS_KNOB_REL]);
    let expected = [0.05, 0.0, 0.0];
    for k in 0..3 {
        let d = b[OBS_KNOB_REL + k] - a[OBS_KNOB_REL + k];
        assert!((d - expected[k]).abs() <= 1e-12, "axis {k}: {d}");
    }
}

#[test]
fn fresh_reset_is_closed_and_untouched() {
    let mut e = env_with(true);
    for seed in 0..20 {
        let obs = e.reset(EnvParams::default(), seed).unwrap();
        assert_eq!(e.door_state().hinge_angle, 0.0);
        assert_eq!(e.door_state().hinge_vel, 0.0);
        assert!(obs[OBS_TACTILE..].iter().all(|&b| b == 0.0));
    }
}

#[test]
fn zero_action_changes_nothing() {
    let mut e = env_with(true);
    e.reset(EnvParams::default(), 1).unwrap();
    let before = *e.arm_state();
    let r = e.step(&[0.0; ACTION_DIM]).unwrap();
    assert_eq!(e.arm_state().joint_pos, before.joint_pos);
    assert_eq!(e.arm_state().gripper_width, before.gripper_width);
    assert_eq!(r.info.door.hinge_angle, 0.0);
}

#[test]
fn gripper_opens_at_the_configured_rate() {
    let mut e = env_with(false);
    e.reset(EnvParams::default(), 1).unwrap();
    let mut close = [0.0; ACTION_DIM];
    close[JOINTS] = -1.0;
    while e.arm_state().gripper_width > 0.0 {
        e.step(&close).unwrap();
    }
    let cfg = EnvConfig::default();
    let mut open = [0.0; ACTION_DIM];
    open[JOINTS] = 1.0;
    for k in 1..=100 {
        e.step(&open).unwrap();
        let expected = (k as f64 * cfg.gripper_rate * cfg.dt).min(cfg.gripper_max_width);
        assert!((e.arm_state().gripper_width - expected).abs() <= 1e-12, "step {k}");
    }
}

fn action() -> impl Strategy<Value = [f64; ACTION_DIM]> {
    proptest::array::uniform8(-1.5..1.5f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gripper_and_joints_are_driven_separately(a in action(), g in -1.0..1.0f64, j in -1.0..1.0f64) {
        let mut e1 = env_with(false);
        let mut e2 = env_with(false);
        e1.reset(EnvParams::default(), 9).unwrap();
        e2.reset(EnvParams::default(), 9).unwrap();
        let mut b = a;
        b[JOINTS] = g;
        e1.step(&a).unwrap();
        e2.step(&b).unwrap();
        prop_assert_eq!(e1.arm_state().joint_pos, e2.arm_state().joint_pos);

        let mut e3 = env_with(false);
        e3.reset(EnvParams::default(), 9).unwrap();
        let mut c = a;
        c[0] = j;
        e3.step(&c).unwrap();
        prop_assert_eq!(e1.arm_state().gripper_width, e3.arm_state().gripper_width);
    }

    #[test]
    fn arm_state_stays_within_limits(actions in proptest::collection::vec(action(), 1..120), seed in 0u64..1000) {
        let cfg = EnvConfig::default();
        let mut e = env_with(true);
        e.reset(EnvParams::default(), seed).unwrap();
        for a in &actions {
            let r = e.step(a).unwrap();
            let s = e.arm_state();
            for i in 0..JOINTS {
                prop_assert!(s.joint_pos[i] >= cfg.arm.joint_lower[i] && s.joint_pos[i] <= cfg.arm.joint_upper[i]);
                prop_assert!(s.joint_vel[i].abs() <= cfg.joint_vel_limit[i]);
            }
            prop_assert!((0.0..=cfg.gripper_max_width).contains(&s.gripper_width));
            let alpha = r.info.door.hinge_angle;
            prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&alpha));
            if r.done {
                break;
            }
        }
    }
}

#[test]
fn scripted_pull_opens_the_door_while_grasped() {
    let mut e = env_with(true);
    e.reset(EnvParams::default(), 0).unwrap();
    let log = grasp_and_pull(&mut e, &ScriptConfig::default()).unwrap();
    let pull: Vec<_> = log.iter().filter(|s| s.phase == Phase::Pull).collect();
    assert!(pull.len() > 50, "pull phase lasted {} steps", pull.len());
    let mut prev = log
        .iter()
        .rev()
        .find(|s| s.phase == Phase::Preload)
        .map_or(0.0, |s| s.result.info.door.hinge_angle);
    for s in &pull {
        assert!(s.result.info.contact.knob_in_grasp, "grasp lost at step {}", s.result.info.step);
        let alpha = s.result.info.door.hinge_angle;
        assert!(alpha > prev, "door stalled at step {}", s.result.info.step);
        prev = alpha;
    }
}

/// Door torque equals minus the hinge moment of the contact force on the
/// fingers, taken at the knob centre before the step.
#[test]
fn hinge_torque_balances_finger_reaction() {
    let mut e = env_with(true);
    e.reset(EnvParams::default(), 0).unwrap();
    let log = grasp_and_pull(&mut e, &ScriptConfig::default()).unwrap();
    let mut replay = env_with(true);
    replay.reset(EnvParams::default(), 0).unwrap();
    let mut loaded = 0;
    for step in &log {
        let lever = replay.knob().center - replay.hinge_point();
        let r = replay.step(&step.action).unwrap();
        let on_fingers = -r.info.contact.force_on_knob;
        let reaction = lever.cross(&on_fingers).z;
        let torque = r.info.door_torque;
        let scale = torque.abs().max(reaction.abs());
        assert!((torque + reaction).abs() <= 1e-9 * scale.max(1e-300), "{torque} vs {reaction}");
        loaded += usize::from(scale > 0.0);
    }
    assert!(loaded > 50);
}
