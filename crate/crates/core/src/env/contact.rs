//! Penalty contact between the two finger pads and the door knob.
//!
//! Each pad is a box whose inner face carries 15 tactile bumps. The knob box
//! penetrates a pad along the pad's inward normal; the normal force is the
//! contact stiffness times the deepest penetration. The contact patch is the
//! part of the knob on the pad side of the face plane, projected onto the
//! face and clipped to it, and the pad force is shared between bumps in
//! proportion to their footprint overlap with the patch. A pad whose patch
//! touches no bump transmits nothing.
//!
//! While both pads press on the knob, a stick-slip spring ties the knob to a
//! grasp anchor fixed in the gripper frame. Its in-plane force is capped by
//! the friction cone; when the demand exceeds the cap the anchor slides so
//! the spring sits exactly on the cone.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{circle_polygon_overlap, clip_to_rect, convex_hull, Point2, Rect};
use crate::tactile::{ArrayGeometry, PADS, UNITS, UNITS_PER_PAD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    /// Penalty stiffness of the pad–knob contact (N/m).
    pub stiffness: f64,
    /// Depth of a finger pad behind its face (m).
    pub pad_thickness: f64,
    /// Stick spring between knob and grasp anchor (N/m).
    pub tangential_stiffness: f64,
    /// Damping on the anchor spring (N·s/m).
    pub tangential_damping: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            stiffness: 1e4,
            pad_thickness: 0.015,
            tangential_stiffness: 2000.0,
            tangential_damping: 300.0,
        }
    }
}

/// Gripper tool frame: columns of `rotation` are (x_g, y_g, z_g); the fingers
/// close along y_g and z_g is the approach direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperPose {
    pub tcp: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub width: f64,
}

impl GripperPose {
    /// Centre of pad `pad`'s face and its inward normal.
    pub fn pad_frame(&self, pad: usize) -> (Vector3<f64>, Vector3<f64>) {
        let y = self.rotation.column(1).into_owned();
        let side = if pad == 0 { 1.0 } else { -1.0 };
        (self.tcp + y * (side * 0.5 * self.width), -y * side)
    }

    /// Pad-local `(a, b)` coordinates of a world point relative to `origin`.
    pub fn pad_coords(&self, origin: &Vector3<f64>, p: &Vector3<f64>) -> Point2 {
        let d = p - origin;
        [
            d.dot(&self.rotation.column(2)),
            d.dot(&self.rotation.column(0)),
        ]
    }
}

/// Knob box: centre, orientation and half extents along its own axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnobBox {
    pub center: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub half_extents: [f64; 3],
}

impl KnobBox {
    pub fn vertices(&self) -> [Vector3<f64>; 8] {
        std::array::from_fn(|i| {
            let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
            let local = Vector3::new(
                s(0) * self.half_extents[0],
                s(1) * self.half_extents[1],
                s(2) * self.half_extents[2],
            );
            self.center + self.rotation * local
        })
    }
}

/// Box edges as vertex index pairs (vertices differ in one bit).
const EDGES: [(usize, usize); 12] = [
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
];

/// State of the stick-slip spring carried between steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspAnchor {
    /// Anchor position in the gripper frame, relative to the tool point.
    pub offset: Vector3<f64>,
    pub prev_error: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactResult {
    pub per_pad_normal_force: [f64; PADS],
    pub per_pad_penetration: [f64; PADS],
    /// Magnitude of the in-plane force the anchor spring asks for (N).
    pub tangential_demand: f64,
    pub slipping: bool,
    pub knob_in_grasp: bool,
    pub per_unit_force: [f64; UNITS],
    /// Total force exerted by the fingers on the knob (N).
    pub force_on_knob: Vector3<f64>,
}

impl ContactResult {
    pub fn none() -> Self {
        Self {
            per_pad_normal_force: [0.0; PADS],
            per_pad_penetration: [0.0; PADS],
            tangential_demand: 0.0,
            slipping: false,
            knob_in_grasp: false,
            per_unit_force: [0.0; UNITS],
            force_on_knob: Vector3::zeros(),
        }
    }
}

/// Pad-local contact patch of the knob on one pad, or `None` when the knob
/// does not reach the pad. Also returns the penetration depth.
pub fn pad_patch(
    gripper: &GripperPose,
    pad: usize,
    knob: &KnobBox,
    pad_half_extent: [f64; 2],
    pad_thickness: f64,
) -> Option<(Vec<Point2>, f64)> {
    let (origin, normal) = gripper.pad_frame(pad);
    let verts = knob.vertices();
    let depth: [f64; 8] = std::array::from_fn(|i| -(verts[i] - origin).dot(&normal));
    let max_depth = depth.iter().cloned().fold(f64::MIN, f64::max);
    let min_depth = depth.iter().cloned().fold(f64::MAX, f64::min);
    if max_depth <= 0.0 || min_depth >= pad_thickness {
        return None;
    }
    let mut points: Vec<Point2> = Vec::with_capacity(12);
    for i in 0..8 {
        if depth[i] >= 0.0 {
            points.push(gripper.pad_coords(&origin, &verts[i]));
        }
    }
    for &(i, j) in &EDGES {
        if (depth[i] > 0.0) != (depth[j] > 0.0) && depth[i] != depth[j] {
            let t = depth[i] / (depth[i] - depth[j]);
            let p = verts[i] + (verts[j] - verts[i]) * t;
            points.push(gripper.pad_coords(&origin, &p));
        }
    }
    let hull = convex_hull(&points);
    let rect = Rect::centered(pad_half_extent[0], pad_half_extent[1]);
    let patch = clip_to_rect(&hull, &rect);
    if patch.len() < 3 {
        return None;
    }
    Some((patch, max_depth.min(pad_thickness)))
}

/// Bump overlap areas of a pad patch, one per unit of the pad.
pub fn bump_overlaps(tactile: &ArrayGeometry, patch: &[Point2]) -> [f64; UNITS_PER_PAD] {
    std::array::from_fn(|k| circle_polygon_overlap(tactile.unit_center(k), tactile.bump_radius, patch))
}

/// Normal forces and per-unit distribution for both pads, without the
/// tangential coupling.
pub fn normal_contacts(
    gripper: &GripperPose,
    knob: &KnobBox,
    tactile: &ArrayGeometry,
    stiffness: f64,
    pad_thickness: f64,
) -> ContactResult {
    let mut out = ContactResult::none();
    for pad in 0..PADS {
        let Some((patch, depth)) =
            pad_patch(gripper, pad, knob, tactile.pad_half_extent, pad_thickness)
        else {
            continue;
        };
        let overlaps = bump_overlaps(tactile, &patch);
        let total: f64 = overlaps.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let force = stiffness * depth;
        out.per_pad_normal_force[pad] = force;
        out.per_pad_penetration[pad] = depth;
        for k in 0..UNITS_PER_PAD {
            out.per_unit_force[pad * UNITS_PER_PAD + k] = force * overlaps[k] / total;
        }
        let (_, normal) = gripper.pad_frame(pad);
        out.force_on_knob += normal * force;
    }
    out.knob_in_grasp = out.per_pad_normal_force.iter().all(|&f| f > 0.0);
    out
}

/// Full contact evaluation including the stick-slip grasp spring.
#[allow(clippy::too_many_arguments)]
pub fn compute_contacts(
    gripper: &GripperPose,
    knob: &KnobBox,
    tactile: &ArrayGeometry,
    config: &ContactConfig,
    knob_friction: f64,
    anchor: &mut Option<GraspAnchor>,
    dt: f64,
) -> ContactResult {
    let mut out = normal_contacts(gripper, knob, tactile, config.stiffness, config.pad_thickness);
    if !out.knob_in_grasp {
        *anchor = None;
        return out;
    }
    let rot = gripper.rotation;
    let closing = rot.column(1).into_owned();
    let a = anchor.get_or_insert_with(|| GraspAnchor {
        offset: rot.transpose() * (knob.center - gripper.tcp),
        prev_error: Vector3::zeros(),
    });
    let desired = gripper.tcp + rot * a.offset;
    let err = desired - knob.center;
    let normal_part = closing * err.dot(&closing);
    let err_t = err - normal_part;
    let rate = (err_t - a.prev_error) / dt;
    let demand_vec = err_t * config.tangential_stiffness + rate * config.tangential_damping;
    let demand = demand_vec.norm();
    let cap = knob_friction * out.per_pad_normal_force.iter().sum::<f64>();
    let force_t = if demand > cap {
        out.slipping = true;
        let shrink = cap / demand;
        let kept = err_t * shrink;
        a.offset = rot.transpose() * (knob.center + kept + normal_part - gripper.tcp);
        a.prev_error = kept;
        demand_vec * shrink
    } else {
        a.prev_error = err_t;
        demand_vec
    };
    out.tangential_demand = demand;
    out.force_on_knob += force_t;
    out
}
