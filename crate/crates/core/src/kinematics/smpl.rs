//! Built-in 24-joint SMPL hierarchy with a default rest pose.
//!
//! The offsets are engine constants (a plausible adult proportion set), scaled
//! so the rest-pose joint extent is exactly [`DEFAULT_HEIGHT`].

use super::Skeleton;
use crate::Vec3;

pub const JOINT_COUNT: usize = 24;

/// Rest-pose vertical joint extent of the default skeleton, meters.
pub const DEFAULT_HEIGHT: f64 = 1.70;

pub const PELVIS: usize = 0;
pub const L_HIP: usize = 1;
pub const R_HIP: usize = 2;
pub const SPINE1: usize = 3;
pub const L_KNEE: usize = 4;
pub const R_KNEE: usize = 5;
pub const SPINE2: usize = 6;
pub const L_ANKLE: usize = 7;
pub const R_ANKLE: usize = 8;
pub const SPINE3: usize = 9;
pub const L_FOOT: usize = 10;
pub const R_FOOT: usize = 11;
pub const NECK: usize = 12;
pub const L_COLLAR: usize = 13;
pub const R_COLLAR: usize = 14;
pub const HEAD: usize = 15;
pub const L_SHOULDER: usize = 16;
pub const R_SHOULDER: usize = 17;
pub const L_ELBOW: usize = 18;
pub const R_ELBOW: usize = 19;
pub const L_WRIST: usize = 20;
pub const R_WRIST: usize = 21;
pub const L_HAND: usize = 22;
pub const R_HAND: usize = 23;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

pub const PARENTS: [Option<usize>; JOINT_COUNT] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

// Unscaled absolute rest positions, T-pose.
const RAW_REST: [[f64; 3]; JOINT_COUNT] = [
    [0.0, 0.95, 0.0],
    [0.085, 0.86, 0.0],
    [-0.085, 0.86, 0.0],
    [0.0, 1.06, 0.0],
    [0.085, 0.48, 0.0],
    [-0.085, 0.48, 0.0],
    [0.0, 1.19, 0.0],
    [0.085, 0.08, 0.0],
    [-0.085, 0.08, 0.0],
    [0.0, 1.25, 0.0],
    [0.085, 0.02, 0.12],
    [-0.085, 0.02, 0.12],
    [0.0, 1.47, 0.0],
    [0.07, 1.40, 0.0],
    [-0.07, 1.40, 0.0],
    [0.0, 1.58, 0.0],
    [0.19, 1.40, 0.0],
    [-0.19, 1.40, 0.0],
    [0.45, 1.40, 0.0],
    [-0.45, 1.40, 0.0],
    [0.70, 1.40, 0.0],
    [-0.70, 1.40, 0.0],
    [0.78, 1.40, 0.0],
    [-0.78, 1.40, 0.0],
];

/// Left/right mirror partner of each joint (self for midline joints).
pub const MIRROR: [usize; JOINT_COUNT] = [
    0, 2, 1, 3, 5, 4, 6, 8, 7, 9, 11, 10, 12, 14, 13, 15, 17, 16, 19, 18, 21, 20, 23, 22,
];

pub(super) fn default_skeleton() -> Skeleton {
    let raw: Vec<Vec3> = RAW_REST.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let scale = DEFAULT_HEIGHT / (hi - lo);
    let offsets = (0..JOINT_COUNT)
        .map(|j| match PARENTS[j] {
            None => raw[j] * scale,
            Some(p) => (raw[j] - raw[p]) * scale,
        })
        .collect();
    Skeleton::new(
        JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        PARENTS.to_vec(),
        offsets,
    )
    .expect("built-in skeleton is valid")
}
