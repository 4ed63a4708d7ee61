//! Pose error metrics: mean per-joint position error and circular RMSE of
//! joint rotation angles.
//!
//! Angles are the magnitude of each joint's parent-relative rotation as
//! recovered from positions, so twist about a bone never enters (it cannot be
//! seen from joint positions).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{fit_pose, Skeleton};
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("sequences have {gt} and {est} frames")]
    FrameCountMismatch { gt: usize, est: usize },
    #[error("frame {frame}: {gt} and {est} joints")]
    JointCountMismatch { frame: usize, gt: usize, est: usize },
    #[error("no valid (frame, joint) pairs to score")]
    NoValidPairs,
    #[error("frame {frame} joint {joint} is not finite")]
    NonFinite { frame: usize, joint: usize },
    #[error("kinematics: {0}")]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}

/// Joint positions of one frame with a validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPositionsFrame {
    pub positions: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl JointPositionsFrame {
    pub fn all_valid(positions: Vec<Vec3>) -> Self {
        let valid = vec![true; positions.len()];
        Self { positions, valid }
    }

    /// Absent joints are stored as zeros and marked invalid.
    pub fn from_options(joints: &[Option<Vec3>]) -> Self {
        Self {
            positions: joints.iter().map(|p| p.unwrap_or_else(Vec3::zeros)).collect(),
            valid: joints.iter().map(Option::is_some).collect(),
        }
    }

    pub fn get(&self, joint: usize) -> Option<Vec3> {
        self.valid[joint].then(|| self.positions[joint])
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Per-joint rotation angles in `[0, π]` of one frame with a validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAnglesFrame {
    pub angles: Vec<f64>,
    pub valid: Vec<bool>,
}

fn check_frames(gt: usize, est: usize) -> Result<(), MetricsError> {
    if gt != est {
        return Err(MetricsError::FrameCountMismatch { gt, est });
    }
    Ok(())
}

/// Mean Euclidean joint error over (frame, joint) pairs valid in both inputs.
pub fn mpjpe(gt: &[JointPositionsFrame], est: &[JointPositionsFrame]) -> Result<f64, MetricsError> {
    mpjpe_over(gt, est, None)
}

/// As [`mpjpe`], restricted to joints with `include[j]`.
pub fn mpjpe_over(
    gt: &[JointPositionsFrame],
    est: &[JointPositionsFrame],
    include: Option<&[bool]>,
) -> Result<f64, MetricsError> {
    check_frames(gt.len(), est.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (frame, (g, e)) in gt.iter().zip(est).enumerate() {
        if g.len() != e.len() {
            return Err(MetricsError::JointCountMismatch { frame, gt: g.len(), est: e.len() });
        }
        for joint in 0..g.len() {
            if !(g.valid[joint] && e.valid[joint]) || include.is_some_and(|m| !m.get(joint).copied().unwrap_or(false)) {
                continue;
            }
            let d = (g.positions[joint] - e.positions[joint]).norm();
            if !d.is_finite() {
                return Err(MetricsError::NonFinite { frame, joint });
            }
            sum += d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::NoValidPairs);
    }
    Ok(sum / n as f64)
}

/// Circular RMSE and its degree-equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crmse {
    pub value: f64,
    pub degrees: f64,
}

/// The angle δ whose constant error gives CRMSE `c`, i.e. `arccos(1 − c²)`,
/// evaluated as `2·asin(c/√2)` to keep precision near zero.
pub fn crmse_degrees(c: f64) -> f64 {
    (2.0 * (c / std::f64::consts::SQRT_2).clamp(0.0, 1.0).asin()).to_degrees()
}

/// `sqrt(mean(1 − cos(θ − θ̂)))` over pairs valid in both inputs.
pub fn crmse(gt: &[JointAnglesFrame], est: &[JointAnglesFrame]) -> Result<Crmse, MetricsError> {
    crmse_over(gt, est, None)
}

pub fn crmse_over(
    gt: &[JointAnglesFrame],
    est: &[JointAnglesFrame],
    include: Option<&[bool]>,
) -> Result<Crmse, MetricsError> {
    check_frames(gt.len(), est.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (frame, (g, e)) in gt.iter().zip(est).enumerate() {
        if g.angles.len() != e.angles.len() {
            return Err(MetricsError::JointCountMismatch { frame, gt: g.angles.len(), est: e.angles.len() });
        }
        for joint in 0..g.angles.len() {
            if !(g.valid[joint] && e.valid[joint]) || include.is_some_and(|m| !m.get(joint).copied().unwrap_or(false)) {
                continue;
            }
            let d = g.angles[joint] - e.angles[joint];
            if !d.is_finite() {
                return Err(MetricsError::NonFinite { frame, joint });
            }
            sum += 1.0 - d.cos();
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::NoValidPairs);
    }
    let value = (sum / n as f64).max(0.0).sqrt();
    Ok(Crmse { value, degrees: crmse_degrees(value) })
}

/// Rotation angle of every joint's fitted parent-relative swing.
///
/// Leaves (no child bone) and joints whose bones are missing are masked.
pub fn angles_from_positions(
    skeleton: &Skeleton,
    frames: &[JointPositionsFrame],
) -> Result<Vec<JointAnglesFrame>, MetricsError> {
    frames
        .iter()
        .map(|f| {
            let targets: Vec<Option<Vec3>> = (0..f.len()).map(|j| f.get(j)).collect();
            let fit = fit_pose(skeleton, &targets, false)?;
            Ok(JointAnglesFrame {
                angles: fit.local_rotations.iter().map(|r| r.map_or(0.0, |q| q.angle())).collect(),
                valid: fit.local_rotations.iter().map(Option::is_some).collect(),
            })
        })
        .collect()
}
