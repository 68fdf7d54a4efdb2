//! Serial-chain kinematics of the 7-joint arm.
//!
//! Joints use the modified Denavit–Hartenberg convention: link `i` is reached
//! by `RotX(alpha) · TransX(a) · RotZ(q_i) · TransZ(d)`. A fixed flange and
//! tool transform follow the last joint.

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub const JOINTS: usize = 7;

pub type JointVector = [f64; JOINTS];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhLink {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmGeometry {
    pub links: [DhLink; JOINTS],
    /// Offset from the last joint frame to the flange along its z axis (m).
    pub flange_offset: f64,
    /// Offset from the flange to the tool point along z (m).
    pub tool_offset: f64,
    /// Rotation of the tool frame about the flange z axis (rad).
    pub tool_yaw: f64,
    pub joint_lower: JointVector,
    pub joint_upper: JointVector,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_2;
        let link = |a, d, alpha| DhLink { a, d, alpha };
        Self {
            links: [
                link(0.0, 0.333, 0.0),
                link(0.0, 0.0, -FRAC_PI_2),
                link(0.0, 0.316, FRAC_PI_2),
                link(0.0825, 0.0, FRAC_PI_2),
                link(-0.0825, 0.384, -FRAC_PI_2),
                link(0.0, 0.0, FRAC_PI_2),
                link(0.088, 0.0, FRAC_PI_2),
            ],
            flange_offset: 0.107,
            tool_offset: 0.1034,
            tool_yaw: -std::f64::consts::FRAC_PI_4,
            joint_lower: [-2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973],
            joint_upper: [2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973],
        }
    }
}

/// Tool pose in the arm base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl Pose {
    /// Fixed-axis roll, pitch, yaw with `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn rpy(&self) -> [f64; 3] {
        rotation_to_rpy(&self.rotation)
    }
}

pub fn rotation_to_rpy(r: &Matrix3<f64>) -> [f64; 3] {
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let pitch = (-r[(2, 0)]).atan2(r[(0, 0)].hypot(r[(1, 0)]));
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    [roll, pitch, yaw]
}

pub fn rpy_to_rotation(rpy: [f64; 3]) -> Matrix3<f64> {
    *Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).matrix()
}

impl ArmGeometry {
    pub fn clamp_joints(&self, q: &mut JointVector) {
        for i in 0..JOINTS {
            q[i] = q[i].clamp(self.joint_lower[i], self.joint_upper[i]);
        }
    }

    pub fn forward_kinematics(&self, q: &JointVector) -> Pose {
        let mut rot = Matrix3::identity();
        let mut pos = Vector3::zeros();
        for (link, &theta) in self.links.iter().zip(q) {
            let (sa, ca) = link.alpha.sin_cos();
            let (st, ct) = theta.sin_cos();
            // RotX(alpha) · RotZ(theta) and the translation TransX(a) then
            // TransZ(d) expressed in the parent frame.
            let local = Matrix3::new(
                ct, -st, 0.0, //
                ca * st, ca * ct, -sa, //
                sa * st, sa * ct, ca,
            );
            let offset = Vector3::new(link.a, -sa * link.d, ca * link.d);
            pos += rot * offset;
            rot *= local;
        }
        pos += rot * Vector3::new(0.0, 0.0, self.flange_offset + self.tool_offset);
        let (sy, cy) = self.tool_yaw.sin_cos();
        rot *= Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
        Pose {
            position: pos,
            rotation: rot,
        }
    }

    /// 6 × 7 Jacobian of (position, rotation vector) by central differences.
    pub fn jacobian(&self, q: &JointVector) -> SMatrix<f64, 6, JOINTS> {
        let h = 1e-6;
        let base = self.forward_kinematics(q);
        let mut jac = SMatrix::<f64, 6, JOINTS>::zeros();
        for j in 0..JOINTS {
            let mut qp = *q;
            let mut qm = *q;
            qp[j] += h;
            qm[j] -= h;
            let fp = self.forward_kinematics(&qp);
            let fm = self.forward_kinematics(&qm);
            let dp = (fp.position - fm.position) / (2.0 * h);
            let dr = (rotation_error(&fp.rotation, &base.rotation)
                - rotation_error(&fm.rotation, &base.rotation))
                / (2.0 * h);
            for k in 0..3 {
                jac[(k, j)] = dp[k];
                jac[(k + 3, j)] = dr[k];
            }
        }
        jac
    }

    /// Damped least-squares inverse kinematics from `seed`, respecting joint
    /// limits. Returns the joints and the final pose error norm.
    pub fn inverse_kinematics(
        &self,
        target: &Pose,
        seed: &JointVector,
        iterations: usize,
    ) -> (JointVector, f64) {
        let mut q = *seed;
        self.clamp_joints(&mut q);
        let damping = 1e-3;
        let mut err_norm = f64::INFINITY;
        for _ in 0..iterations {
            let pose = self.forward_kinematics(&q);
            let dp = target.position - pose.position;
            let dr = rotation_error(&target.rotation, &pose.rotation);
            let err = SVector::<f64, 6>::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z);
            err_norm = err.norm();
            if !err_norm.is_finite() || err_norm < 1e-12 {
                break;
            }
            let jac = self.jacobian(&q);
            let jjt = jac * jac.transpose() + SMatrix::<f64, 6, 6>::identity() * damping * damping;
            let Some(solve) = jjt.lu().solve(&err) else {
                break;
            };
            let dq = jac.transpose() * solve;
            for i in 0..JOINTS {
                q[i] += dq[i];
            }
            self.clamp_joints(&mut q);
        }
        (q, err_norm)
    }
}

/// Rotation vector of `target · currentᵀ`.
fn rotation_error(target: &Matrix3<f64>, current: &Matrix3<f64>) -> Vector3<f64> {
    // The quaternion route stays finite near a half turn, where acos of the
    // trace would leave its domain through rounding.
    let r = Rotation3::from_matrix_unchecked(target * current.transpose());
    UnitQuaternion::from_rotation_matrix(&r).scaled_axis()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rpy_round_trip() {
        for rpy in [[0.3, -0.2, 1.1], [1.5, 0.1, -2.9], [0.0, 0.0, 0.0]] {
            let back = rotation_to_rpy(&rpy_to_rotation(rpy));
            for k in 0..3 {
                assert!((back[k] - rpy[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ik_reaches_fk_target() {
        let arm = ArmGeometry::default();
        let q_true = [0.2, -0.4, 0.1, -2.0, 0.3, 1.8, 0.5];
        let target = arm.forward_kinematics(&q_true);
        let seed = [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785];
        let (q, err) = arm.inverse_kinematics(&target, &seed, 200);
        assert!(err < 1e-9, "{err}");
        let pose = arm.forward_kinematics(&q);
        assert!((pose.position - target.position).norm() < 1e-9);
    }
}
