use serde::{Deserialize, Serialize};

use super::{BuildLabel, Capsule, MeshError, SurfacePoint, TriMesh};
use crate::kinematics::{JointTransform, Skeleton};
use crate::Vec3;

/// Sparse joint → weight map for one vertex.
pub type VertexWeights = Vec<(usize, f64)>;

pub const MAX_INFLUENCES: usize = 4;

/// Rest-pose capsule rigidly attached to `joint`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyCapsule {
    pub joint: usize,
    pub capsule: Capsule,
}

/// A template vertex reserved for a skin marker: `slot` 0 is A, 1 is B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerSite {
    pub joint: usize,
    pub slot: usize,
    pub vertex: usize,
    pub point: SurfacePoint,
    /// Unit direction from the joint to the site at rest.
    pub lateral: Vec3,
}

/// Template mesh bound to a skeleton by linear blend skinning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinnedBody {
    pub template: TriMesh,
    pub skeleton: Skeleton,
    pub weights: Vec<VertexWeights>,
    pub build_label: BuildLabel,
    /// Collision and coverage proxies; empty for hand-built bodies.
    pub capsules: Vec<BodyCapsule>,
    /// Skin marker sites, two per joint; empty for hand-built bodies.
    pub marker_sites: Vec<MarkerSite>,
}

impl SkinnedBody {
    pub fn new(
        template: TriMesh,
        skeleton: Skeleton,
        weights: Vec<VertexWeights>,
        build_label: BuildLabel,
    ) -> Result<Self, MeshError> {
        validate_weights(&weights, template.vertices().len(), skeleton.len())?;
        Ok(Self { template, skeleton, weights, build_label, capsules: Vec::new(), marker_sites: Vec::new() })
    }

    /// Signed distance to the rest-pose capsule union (negative inside).
    pub fn capsule_sdf(&self, p: &Vec3) -> f64 {
        self.capsules.iter().map(|c| c.capsule.signed_distance(p)).fold(f64::INFINITY, f64::min)
    }

    /// Skinning weights for an arbitrary rest-pose point, from the same
    /// nearest-bone rule used for the template.
    pub fn weights_at(&self, p: &Vec3) -> VertexWeights {
        super::body::bone_weights(&self.capsules, p)
    }

    /// Capsules carried to the posed skeleton.
    pub fn posed_capsules(&self, transforms: &[JointTransform]) -> Vec<Capsule> {
        let rest = self.skeleton.rest_positions();
        self.capsules
            .iter()
            .map(|bc| {
                let t = &transforms[bc.joint];
                let r = rest[bc.joint];
                Capsule {
                    a: t.transform_point(&(bc.capsule.a - r)),
                    b: t.transform_point(&(bc.capsule.b - r)),
                    radius: bc.capsule.radius,
                }
            })
            .collect()
    }
}

pub(crate) fn validate_weights(
    weights: &[VertexWeights],
    vertices: usize,
    joints: usize,
) -> Result<(), MeshError> {
    if weights.len() != vertices {
        return Err(MeshError::WeightCountMismatch { expected: vertices, found: weights.len() });
    }
    for (vertex, w) in weights.iter().enumerate() {
        let bad = |reason: String| Err(MeshError::BadWeights { vertex, reason });
        if w.is_empty() || w.len() > MAX_INFLUENCES {
            return bad(format!("{} influences (1..={MAX_INFLUENCES} allowed)", w.len()));
        }
        if let Some(&(j, _)) = w.iter().find(|(j, _)| *j >= joints) {
            return bad(format!("joint {j} out of range"));
        }
        if w.iter().any(|(_, x)| !(*x >= 0.0)) {
            return bad("negative weight".into());
        }
        let sum: f64 = w.iter().map(|(_, x)| x).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return bad(format!("weights sum to {sum}"));
        }
    }
    Ok(())
}

/// Deforms points with `v' = Σ w_j · T_j · T_j,rest⁻¹ · v`.
pub(crate) fn skin_points(
    points: &[Vec3],
    weights: &[VertexWeights],
    rest: &[Vec3],
    transforms: &[JointTransform],
) -> Vec<Vec3> {
    points
        .iter()
        .zip(weights)
        .map(|(v, w)| {
            w.iter()
                .map(|&(j, x)| transforms[j].transform_point(&(v - rest[j])) * x)
                .sum()
        })
        .collect()
}

/// Linear blend skinning of the body's template. Rest orientations are the
/// identity, so the inverse rest transform is a translation by the rest position.
pub fn skin_lbs(body: &SkinnedBody, transforms: &[JointTransform]) -> Result<TriMesh, MeshError> {
    if transforms.len() != body.skeleton.len() {
        return Err(MeshError::TransformCountMismatch {
            expected: body.skeleton.len(),
            found: transforms.len(),
        });
    }
    validate_weights(&body.weights, body.template.vertices().len(), body.skeleton.len())?;
    let rest = body.skeleton.rest_positions();
    let moved = skin_points(body.template.vertices(), &body.weights, &rest, transforms);
    Ok(body.template.with_positions_unchecked(moved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{forward_kinematics, Pose};
    use crate::mesh::primitives::unit_cube;
    use crate::Quat;
    use approx::assert_relative_eq;

    fn one_joint() -> Skeleton {
        Skeleton::new(vec!["root".into()], vec![None], vec![Vec3::zeros()]).unwrap()
    }

    #[test]
    fn rigid_rotation() {
        let s = one_joint();
        let cube = unit_cube();
        let body = SkinnedBody::new(cube.clone(), s.clone(), vec![vec![(0, 1.0)]; 8], BuildLabel::MaleMedium)
            .unwrap();
        let q = Quat::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2);
        let pose = Pose { root_translation: Vec3::zeros(), local_rotations: vec![q] };
        let out = skin_lbs(&body, &forward_kinematics(&s, &pose).unwrap()).unwrap();
        for (a, b) in out.vertices().iter().zip(cube.vertices()) {
            assert_relative_eq!(*a, q * b, epsilon = 1e-12);
        }
    }

    #[test]
    fn half_weights_take_half_the_translation() {
        let s = Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![None, Some(0)],
            vec![Vec3::zeros(), Vec3::x()],
        )
        .unwrap();
        let cube = unit_cube();
        let body =
            SkinnedBody::new(cube.clone(), s.clone(), vec![vec![(0, 0.5), (1, 0.5)]; 8], BuildLabel::FemaleSmall)
                .unwrap();
        let mut t = forward_kinematics(&s, &Pose::rest(&s)).unwrap();
        for (a, b) in skin_lbs(&body, &t).unwrap().vertices().iter().zip(cube.vertices()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        t[1].position += Vec3::new(0.0, 0.2, 0.0);
        for (a, b) in skin_lbs(&body, &t).unwrap().vertices().iter().zip(cube.vertices()) {
            assert_relative_eq!(*a, b + Vec3::new(0.0, 0.1, 0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn mismatches_are_rejected() {
        let s = one_joint();
        assert!(matches!(
            SkinnedBody::new(unit_cube(), s.clone(), vec![vec![(0, 1.0)]; 7], BuildLabel::MaleSmall),
            Err(MeshError::WeightCountMismatch { expected: 8, found: 7 })
        ));
        assert!(matches!(
            SkinnedBody::new(unit_cube(), s.clone(), vec![vec![(0, 0.9)]; 8], BuildLabel::MaleSmall),
            Err(MeshError::BadWeights { vertex: 0, .. })
        ));
        let body = SkinnedBody::new(unit_cube(), s, vec![vec![(0, 1.0)]; 8], BuildLabel::MaleSmall).unwrap();
        assert!(matches!(
            skin_lbs(&body, &[]),
            Err(MeshError::TransformCountMismatch { expected: 1, found: 0 })
        ));
    }
}
