//! Skeleton hierarchy, forward kinematics and motion sequences.

mod bvh;
mod fit;
mod procedural;
pub mod smpl;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Quat, Vec3};

pub use bvh::{parse_bvh, write_bvh, BvhError};
pub use fit::{fit_pose, swing, PoseFit};
pub use procedural::{max_angular_speed, procedural_motion};

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("skeleton has no joints")]
    Empty,
    #[error("joint 0 must be the root")]
    RootNotFirst,
    #[error("joint {joint} has invalid parent {parent} (parents must precede children)")]
    BadParent { joint: usize, parent: usize },
    #[error("joint {joint} is a second root")]
    MultipleRoots { joint: usize },
    #[error("joint {joint} has a zero rest offset")]
    ZeroOffset { joint: usize },
    #[error("field lengths disagree: {names} names, {parents} parents, {offsets} offsets")]
    LengthMismatch { names: usize, parents: usize, offsets: usize },
    #[error("pose has {pose} rotations but skeleton has {skeleton} joints")]
    TopologyMismatch { pose: usize, skeleton: usize },
    #[error("skeleton topologies differ")]
    SkeletonMismatch,
    #[error("motion sequence needs at least one frame")]
    NoFrames,
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("skeleton rest height is zero")]
    ZeroHeight,
    #[error("target height must be positive, got {0}")]
    BadTargetHeight(f64),
    #[error("duration must be positive and finite, got {0}")]
    BadDuration(f64),
    #[error("unknown joint name {0:?}")]
    UnknownJoint(String),
}

/// The three motion families exercised by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionClass {
    Basic,
    Fast,
    Extreme,
}

impl MotionClass {
    pub const ALL: [MotionClass; 3] = [MotionClass::Basic, MotionClass::Fast, MotionClass::Extreme];

    pub fn as_str(self) -> &'static str {
        match self {
            MotionClass::Basic => "basic",
            MotionClass::Fast => "fast",
            MotionClass::Extreme => "extreme",
        }
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(MotionClass::Basic),
            "fast" => Ok(MotionClass::Fast),
            "extreme" => Ok(MotionClass::Extreme),
            other => Err(format!("unknown motion class {other:?}")),
        }
    }
}

/// Rooted joint tree with parent-relative rest offsets.
///
/// Joints are stored so that every parent precedes its children; joint 0 is
/// the unique root. Rest orientations are the identity, so the rest pose is
/// fully described by the offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    rest_offsets: Vec<Vec3>,
    end_sites: Vec<Option<Vec3>>,
}

impl Skeleton {
    pub fn new(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        rest_offsets: Vec<Vec3>,
    ) -> Result<Self, KinematicsError> {
        let n = names.len();
        Self::with_end_sites(names, parents, rest_offsets, vec![None; n])
    }

    pub fn with_end_sites(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        rest_offsets: Vec<Vec3>,
        end_sites: Vec<Option<Vec3>>,
    ) -> Result<Self, KinematicsError> {
        if names.is_empty() {
            return Err(KinematicsError::Empty);
        }
        if names.len() != parents.len()
            || names.len() != rest_offsets.len()
            || names.len() != end_sites.len()
        {
            return Err(KinematicsError::LengthMismatch {
                names: names.len(),
                parents: parents.len(),
                offsets: rest_offsets.len(),
            });
        }
        if parents[0].is_some() {
            return Err(KinematicsError::RootNotFirst);
        }
        for (joint, parent) in parents.iter().enumerate().skip(1) {
            match *parent {
                None => return Err(KinematicsError::MultipleRoots { joint }),
                Some(p) if p >= joint => {
                    return Err(KinematicsError::BadParent { joint, parent: p })
                }
                Some(_) => {}
            }
            if rest_offsets[joint].norm() == 0.0 {
                return Err(KinematicsError::ZeroOffset { joint });
            }
        }
        Ok(Self { names, parents, rest_offsets, end_sites })
    }

    /// The default 24-joint SMPL skeleton, 1.70 m tall at rest.
    pub fn smpl() -> Self {
        smpl::default_skeleton()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn rest_offset(&self, joint: usize) -> Vec3 {
        self.rest_offsets[joint]
    }

    pub fn rest_offsets(&self) -> &[Vec3] {
        &self.rest_offsets
    }

    pub fn end_site(&self, joint: usize) -> Option<Vec3> {
        self.end_sites[joint]
    }

    pub fn children(&self, joint: usize) -> Vec<usize> {
        (joint + 1..self.len()).filter(|&c| self.parents[c] == Some(joint)).collect()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// True when both skeletons have the same parent structure.
    pub fn same_topology(&self, other: &Skeleton) -> bool {
        self.parents == other.parents
    }

    /// True for the 24-joint SMPL hierarchy (names and parents).
    pub fn is_smpl24(&self) -> bool {
        self.len() == smpl::JOINT_COUNT
            && self.parents == smpl::PARENTS
            && self.names.iter().zip(smpl::JOINT_NAMES).all(|(a, b)| a == b)
    }

    pub fn rest_positions(&self) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let p = match self.parents[j] {
                None => self.rest_offsets[j],
                Some(p) => out[p] + self.rest_offsets[j],
            };
            out.push(p);
        }
        out
    }

    /// Vertical (y) extent of the rest-pose joint positions.
    pub fn rest_height(&self) -> f64 {
        let (lo, hi) = self
            .rest_positions()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
        hi - lo
    }

    /// Copy with every offset (root and end sites included) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            names: self.names.clone(),
            parents: self.parents.clone(),
            rest_offsets: self.rest_offsets.iter().map(|o| o * factor).collect(),
            end_sites: self.end_sites.iter().map(|e| e.map(|o| o * factor)).collect(),
        }
    }

    /// Copy with joint `joint`'s rest offset replaced.
    pub fn with_offset(&self, joint: usize, offset: Vec3) -> Result<Self, KinematicsError> {
        let mut offsets = self.rest_offsets.clone();
        offsets[joint] = offset;
        Self::with_end_sites(self.names.clone(), self.parents.clone(), offsets, self.end_sites.clone())
    }

    /// Permutation that reorders this skeleton's joints to match `names`.
    ///
    /// Returns `order` with `order[new] = old`.
    pub fn order_for(&self, names: &[&str]) -> Result<Vec<usize>, KinematicsError> {
        if names.len() != self.len() {
            return Err(KinematicsError::SkeletonMismatch);
        }
        names
            .iter()
            .map(|n| self.joint_index(n).ok_or_else(|| KinematicsError::UnknownJoint(n.to_string())))
            .collect()
    }

    fn permuted(&self, order: &[usize]) -> Result<Self, KinematicsError> {
        let mut inverse = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let parents = order.iter().map(|&old| self.parents[old].map(|p| inverse[p])).collect();
        Self::with_end_sites(
            order.iter().map(|&o| self.names[o].clone()).collect(),
            parents,
            order.iter().map(|&o| self.rest_offsets[o]).collect(),
            order.iter().map(|&o| self.end_sites[o]).collect(),
        )
    }
}

/// Per-frame joint configuration: root translation plus parent-relative rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub root_translation: Vec3,
    pub local_rotations: Vec<Quat>,
}

impl Pose {
    /// Identity rotations with the root at its rest offset.
    pub fn rest(skeleton: &Skeleton) -> Self {
        Self {
            root_translation: skeleton.rest_offset(0),
            local_rotations: vec![Quat::identity(); skeleton.len()],
        }
    }
}

/// Global placement of one joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointTransform {
    pub position: Vec3,
    pub orientation: Quat,
}

impl JointTransform {
    pub fn identity() -> Self {
        Self { position: Vec3::zeros(), orientation: Quat::identity() }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * p
    }
}

pub fn forward_kinematics(
    skeleton: &Skeleton,
    pose: &Pose,
) -> Result<Vec<JointTransform>, KinematicsError> {
    if pose.local_rotations.len() != skeleton.len() {
        return Err(KinematicsError::TopologyMismatch {
            pose: pose.local_rotations.len(),
            skeleton: skeleton.len(),
        });
    }
    let mut out: Vec<JointTransform> = Vec::with_capacity(skeleton.len());
    for j in 0..skeleton.len() {
        let t = match skeleton.parent(j) {
            None => JointTransform {
                position: pose.root_translation,
                orientation: pose.local_rotations[0],
            },
            Some(p) => {
                let parent = out[p];
                JointTransform {
                    position: parent.position + parent.orientation * skeleton.rest_offset(j),
                    orientation: parent.orientation * pose.local_rotations[j],
                }
            }
        };
        out.push(t);
    }
    Ok(out)
}

/// Joint positions only; convenience over [`forward_kinematics`].
pub fn joint_positions(skeleton: &Skeleton, pose: &Pose) -> Result<Vec<Vec3>, KinematicsError> {
    Ok(forward_kinematics(skeleton, pose)?.into_iter().map(|t| t.position).collect())
}

/// Sampled motion on a fixed skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    pub skeleton: Skeleton,
    pub fps: f64,
    pub frames: Vec<Pose>,
    pub motion_class: MotionClass,
}

impl MotionSequence {
    pub fn new(
        skeleton: Skeleton,
        fps: f64,
        frames: Vec<Pose>,
        motion_class: MotionClass,
    ) -> Result<Self, KinematicsError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(KinematicsError::BadFps(fps));
        }
        if frames.is_empty() {
            return Err(KinematicsError::NoFrames);
        }
        if let Some(bad) = frames.iter().find(|f| f.local_rotations.len() != skeleton.len()) {
            return Err(KinematicsError::TopologyMismatch {
                pose: bad.local_rotations.len(),
                skeleton: skeleton.len(),
            });
        }
        Ok(Self { skeleton, fps, frames, motion_class })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    pub fn global_transforms(&self) -> Vec<Vec<JointTransform>> {
        self.frames
            .iter()
            .map(|f| forward_kinematics(&self.skeleton, f).expect("validated at construction"))
            .collect()
    }

    pub fn joint_positions(&self) -> Vec<Vec<Vec3>> {
        self.global_transforms()
            .into_iter()
            .map(|frame| frame.into_iter().map(|t| t.position).collect())
            .collect()
    }

    /// Plays the same rotations on another skeleton of identical topology.
    ///
    /// Root translations are scaled by the ratio of rest heights so the motion
    /// keeps its proportions (stride length, pelvis height).
    pub fn retarget(&self, skeleton: &Skeleton) -> Result<Self, KinematicsError> {
        if !self.skeleton.same_topology(skeleton) {
            return Err(KinematicsError::SkeletonMismatch);
        }
        let from = self.skeleton.rest_height();
        if from <= 0.0 {
            return Err(KinematicsError::ZeroHeight);
        }
        let ratio = skeleton.rest_height() / from;
        let frames = self
            .frames
            .iter()
            .map(|f| Pose {
                root_translation: f.root_translation * ratio,
                local_rotations: f.local_rotations.clone(),
            })
            .collect();
        Self::new(skeleton.clone(), self.fps, frames, self.motion_class)
    }

    /// Reorders joints to match `names` (e.g. a BVH file written in depth-first order).
    pub fn reorder_joints(&self, names: &[&str]) -> Result<Self, KinematicsError> {
        let order = self.skeleton.order_for(names)?;
        let skeleton = self.skeleton.permuted(&order)?;
        let frames = self
            .frames
            .iter()
            .map(|f| Pose {
                root_translation: f.root_translation,
                local_rotations: order.iter().map(|&o| f.local_rotations[o]).collect(),
            })
            .collect();
        Self::new(skeleton, self.fps, frames, self.motion_class)
    }
}

/// Uniformly rescales a sequence so its skeleton's rest height equals `target_height`.
pub fn rescale_to_height(
    seq: &MotionSequence,
    target_height: f64,
) -> Result<MotionSequence, KinematicsError> {
    if !(target_height.is_finite() && target_height > 0.0) {
        return Err(KinematicsError::BadTargetHeight(target_height));
    }
    let current = seq.skeleton.rest_height();
    if !(current > 0.0) {
        return Err(KinematicsError::ZeroHeight);
    }
    let factor = target_height / current;
    let frames = seq
        .frames
        .iter()
        .map(|f| Pose {
            root_translation: f.root_translation * factor,
            local_rotations: f.local_rotations.clone(),
        })
        .collect();
    MotionSequence::new(seq.skeleton.scaled(factor), seq.fps, frames, seq.motion_class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Unit;
    use std::f64::consts::FRAC_PI_2;

    fn chain2() -> Skeleton {
        Skeleton::new(
            vec!["root".into(), "tip".into()],
            vec![None, Some(0)],
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn smpl_skeleton_is_valid_and_170_tall() {
        let s = Skeleton::smpl();
        assert_eq!(s.len(), 24);
        assert!(s.is_smpl24());
        assert_relative_eq!(s.rest_height(), 1.70, epsilon = 1e-12);
        assert_eq!(s.children(smpl::PELVIS), vec![1, 2, 3]);
        assert_eq!(s.children(smpl::SPINE3), vec![12, 13, 14]);
    }

    #[test]
    fn identity_pose_accumulates_offsets() {
        let s = Skeleton::smpl();
        let mut pose = Pose::rest(&s);
        pose.root_translation = Vec3::zeros();
        let fk = forward_kinematics(&s, &pose).unwrap();
        for j in 0..s.len() {
            let mut expected = Vec3::zeros();
            let mut k = Some(j);
            while let Some(i) = k {
                if s.parent(i).is_some() {
                    expected += s.rest_offset(i);
                }
                k = s.parent(i);
            }
            assert_relative_eq!(fk[j].position, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotated_root_moves_child_analytically() {
        let s = chain2();
        let pose = Pose {
            root_translation: Vec3::zeros(),
            local_rotations: vec![
                Quat::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2),
                Quat::identity(),
            ],
        };
        let fk = forward_kinematics(&s, &pose).unwrap();
        assert_relative_eq!(fk[1].position, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn fk_rejects_wrong_rotation_count() {
        let s = chain2();
        let pose = Pose { root_translation: Vec3::zeros(), local_rotations: vec![Quat::identity()] };
        assert_eq!(
            forward_kinematics(&s, &pose),
            Err(KinematicsError::TopologyMismatch { pose: 1, skeleton: 2 })
        );
    }

    #[test]
    fn skeleton_validation() {
        let names = || vec!["a".to_string(), "b".to_string()];
        assert_eq!(
            Skeleton::new(names(), vec![None, None], vec![Vec3::zeros(), Vec3::x()]),
            Err(KinematicsError::MultipleRoots { joint: 1 })
        );
        assert_eq!(
            Skeleton::new(names(), vec![None, Some(1)], vec![Vec3::zeros(), Vec3::x()]),
            Err(KinematicsError::BadParent { joint: 1, parent: 1 })
        );
        assert_eq!(
            Skeleton::new(names(), vec![None, Some(0)], vec![Vec3::zeros(), Vec3::zeros()]),
            Err(KinematicsError::ZeroOffset { joint: 1 })
        );
        assert_eq!(
            Skeleton::new(names(), vec![Some(0), None], vec![Vec3::zeros(), Vec3::x()]),
            Err(KinematicsError::RootNotFirst)
        );
    }

    #[test]
    fn rescale_identity_and_doubling() {
        let s = Skeleton::smpl();
        let seq = MotionSequence::new(s.clone(), 30.0, vec![Pose::rest(&s)], MotionClass::Basic)
            .unwrap();
        let same = rescale_to_height(&seq, 1.70).unwrap();
        for (a, b) in same.skeleton.rest_offsets().iter().zip(s.rest_offsets()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let half = rescale_to_height(&seq, 0.85).unwrap();
        let back = rescale_to_height(&half, 1.70).unwrap();
        for ((h, b), o) in half
            .skeleton
            .rest_offsets()
            .iter()
            .zip(back.skeleton.rest_offsets())
            .zip(s.rest_offsets())
        {
            assert_relative_eq!(h * 2.0, *b, epsilon = 1e-12);
            assert_relative_eq!(b, o, epsilon = 1e-12);
        }
    }

    #[test]
    fn rescale_rejects_degenerate_height() {
        // A horizontal two-joint chain has zero vertical extent.
        let s = chain2();
        let seq = MotionSequence::new(s.clone(), 30.0, vec![Pose::rest(&s)], MotionClass::Basic)
            .unwrap();
        assert_eq!(rescale_to_height(&seq, 1.7), Err(KinematicsError::ZeroHeight));
    }

    #[test]
    fn reorder_joints_preserves_positions() {
        let s = Skeleton::smpl();
        let mut pose = Pose::rest(&s);
        pose.local_rotations[smpl::L_KNEE] =
            Quat::from_axis_angle(&Unit::new_normalize(Vec3::new(1.0, 0.2, 0.0)), 0.7);
        let seq = MotionSequence::new(s.clone(), 30.0, vec![pose], MotionClass::Basic).unwrap();
        let names: Vec<&str> = smpl::JOINT_NAMES.to_vec();
        let mut dfs_names = Vec::new();
        fn visit(s: &Skeleton, j: usize, out: &mut Vec<usize>) {
            out.push(j);
            for c in s.children(j) {
                visit(s, c, out);
            }
        }
        let mut order = Vec::new();
        visit(&s, 0, &mut order);
        for &o in &order {
            dfs_names.push(names[o]);
        }
        let dfs = seq.reorder_joints(&dfs_names).unwrap();
        let back = dfs.reorder_joints(&names).unwrap();
        let p0 = seq.joint_positions();
        let p1 = back.joint_positions();
        for (a, b) in p0[0].iter().zip(&p1[0]) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }
}
