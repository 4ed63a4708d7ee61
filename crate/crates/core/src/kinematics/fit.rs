//! Joint rotations recovered from joint positions.
//!
//! Joints are visited parents first. A joint with one child gets the minimal
//! rotation, in its parent's frame, that turns the rest bone toward the
//! observed bone; twist about the bone stays at rest. A joint with several
//! children gets the least-squares (Kabsch) rotation over all of them, which
//! is exact when the observed child offsets are a rigid image of the rest ones.

use nalgebra::{Matrix3, Rotation3, Unit};

use super::{KinematicsError, Skeleton};
use crate::{Quat, Vec3};

const MIN_BONE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFit {
    /// Parent-relative rotations; `None` where the joint's rotation is not
    /// observable (leaf, missing joint or child, or unfitted parent).
    pub local_rotations: Vec<Option<Quat>>,
    /// Joint positions implied by the fitted rotations and the rest bone lengths.
    pub positions: Vec<Option<Vec3>>,
}

/// Fits joint rotations to target positions.
///
/// With `chained`, each bone is aimed from the already re-projected parent
/// position, so the output respects the rest bone lengths everywhere. Without
/// it, bones are aimed between the observed positions themselves (used for
/// angle extraction, where each joint is judged on its own bones).
pub fn fit_pose(skeleton: &Skeleton, targets: &[Option<Vec3>], chained: bool) -> Result<PoseFit, KinematicsError> {
    let n = skeleton.len();
    if targets.len() != n {
        return Err(KinematicsError::TopologyMismatch { pose: targets.len(), skeleton: n });
    }
    let mut local = vec![None; n];
    let mut global: Vec<Option<Quat>> = vec![None; n];
    let mut positions: Vec<Option<Vec3>> = vec![None; n];
    positions[0] = targets[0];
    for j in 0..n {
        let base = if chained { positions[j] } else { targets[j] };
        let Some(base) = base else { continue };
        let frame = match skeleton.parent(j) {
            None => Some(Quat::identity()),
            Some(p) => global[p],
        };
        let Some(frame) = frame else { continue };
        let pairs: Vec<(Vec3, Vec3)> = skeleton
            .children(j)
            .into_iter()
            .filter_map(|c| {
                let d = targets[c]? - base;
                if d.norm() < MIN_BONE {
                    log::warn!("joint {c} coincides with its parent {j}; bone skipped");
                    return None;
                }
                Some((skeleton.rest_offset(c), frame.inverse() * d))
            })
            .collect();
        let rotation = match pairs.as_slice() {
            [] => None,
            [(rest, seen)] => Some(swing(rest, seen)),
            _ => Some(kabsch(&pairs)),
        };
        local[j] = rotation;
        let g = frame * rotation.unwrap_or_else(Quat::identity);
        global[j] = rotation.map(|_| g);
        for c in skeleton.children(j) {
            positions[c] = Some(base + g * skeleton.rest_offset(c));
        }
    }
    Ok(PoseFit { local_rotations: local, positions })
}

/// Minimal rotation taking direction `from` to direction `to`.
pub fn swing(from: &Vec3, to: &Vec3) -> Quat {
    Quat::rotation_between(from, to).unwrap_or_else(|| {
        // Antiparallel: any perpendicular axis works.
        let helper = if from.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        Quat::from_axis_angle(&Unit::new_normalize(from.cross(&helper)), std::f64::consts::PI)
    })
}

/// Rotation `R` minimizing `Σ ‖R·a − b‖²` over `(a, b)` pairs.
fn kabsch(pairs: &[(Vec3, Vec3)]) -> Quat {
    let h: Matrix3<f64> = pairs.iter().map(|(a, b)| b * a.transpose()).sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let d = (u * v_t).determinant().signum();
    let r = u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t;
    Quat::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{joint_positions, Pose};
    use approx::assert_relative_eq;

    #[test]
    fn rest_positions_give_identity() {
        let s = Skeleton::smpl();
        let targets: Vec<Option<Vec3>> = s.rest_positions().into_iter().map(Some).collect();
        let fit = fit_pose(&s, &targets, true).unwrap();
        for (j, r) in fit.local_rotations.iter().enumerate() {
            match r {
                Some(q) => assert!(q.angle() < 1e-12, "joint {j}"),
                None => assert!(s.children(j).is_empty()),
            }
        }
    }

    #[test]
    fn recovers_arbitrary_pose_positions() {
        let s = Skeleton::smpl();
        let mut pose = Pose::rest(&s);
        pose.root_translation = Vec3::new(0.3, 0.9, -0.2);
        for (j, q) in pose.local_rotations.iter_mut().enumerate() {
            let a = j as f64 * 0.37;
            *q = Quat::from_euler_angles(0.3 * a.sin(), 0.5 * a.cos(), 0.2 * (2.0 * a).sin());
        }
        let truth = joint_positions(&s, &pose).unwrap();
        let targets: Vec<Option<Vec3>> = truth.iter().copied().map(Some).collect();
        for chained in [true, false] {
            let fit = fit_pose(&s, &targets, chained).unwrap();
            for (p, t) in fit.positions.iter().zip(&truth) {
                assert_relative_eq!(p.unwrap(), *t, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn antiparallel_swing() {
        let q = swing(&Vec3::x(), &-Vec3::x());
        assert_relative_eq!(q * Vec3::x(), -Vec3::x(), epsilon = 1e-12);
    }

    #[test]
    fn missing_joint_masks_dependents() {
        let s = Skeleton::smpl();
        let mut targets: Vec<Option<Vec3>> = s.rest_positions().into_iter().map(Some).collect();
        targets[4] = None; // left knee
        let fit = fit_pose(&s, &targets, false).unwrap();
        assert!(fit.local_rotations[1].is_none() && fit.local_rotations[4].is_none());
        assert!(fit.local_rotations[7].is_none());
        assert!(fit.local_rotations[2].is_some());
    }
}
