//! Parametric capsule body for the six build labels.
//!
//! Each bone carries one capsule (two side by side for the torso, giving it
//! more width than depth). The template is the zero level set of the union of
//! capsules, extracted with marching tetrahedra on a regular grid, and two skin
//! marker sites per joint are spliced into it.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::skinning::{validate_weights, BodyCapsule, MarkerSite, SkinnedBody, VertexWeights, MAX_INFLUENCES};
use super::{Capsule, MeshError, SurfacePoint, TriMesh};
use crate::kinematics::smpl::*;
use crate::kinematics::Skeleton;
use crate::Vec3;

/// Marker base height above the skin, meters.
pub const MARKER_BASE_HEIGHT: f64 = 0.005;

const GRID_STEP: f64 = 0.015;
const WEIGHT_FALLOFF: f64 = 0.015;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildLabel {
    FemaleSmall,
    FemaleMedium,
    FemaleLarge,
    MaleSmall,
    MaleMedium,
    MaleLarge,
}

impl BuildLabel {
    pub const ALL: [BuildLabel; 6] = [
        BuildLabel::FemaleSmall,
        BuildLabel::FemaleMedium,
        BuildLabel::FemaleLarge,
        BuildLabel::MaleSmall,
        BuildLabel::MaleMedium,
        BuildLabel::MaleLarge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuildLabel::FemaleSmall => "female_small",
            BuildLabel::FemaleMedium => "female_medium",
            BuildLabel::FemaleLarge => "female_large",
            BuildLabel::MaleSmall => "male_small",
            BuildLabel::MaleMedium => "male_medium",
            BuildLabel::MaleLarge => "male_large",
        }
    }

    /// Built-in body proportions. Engine constants, not measurements of any
    /// particular subject.
    pub fn params(self) -> BodyParams {
        let (height, shoulder_width, torso_girth, limb_girth) = match self {
            BuildLabel::FemaleSmall => (1.60, 0.34, 0.76, 0.50),
            BuildLabel::FemaleMedium => (1.64, 0.36, 0.86, 0.56),
            BuildLabel::FemaleLarge => (1.67, 0.38, 1.02, 0.66),
            BuildLabel::MaleSmall => (1.70, 0.38, 0.82, 0.48),
            BuildLabel::MaleMedium => (1.75, 0.40, 0.94, 0.54),
            BuildLabel::MaleLarge => (1.78, 0.43, 1.10, 0.64),
        };
        BodyParams { height, shoulder_width, torso_girth, limb_girth }
    }
}

impl fmt::Display for BuildLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuildLabel {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuildLabel::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| MeshError::UnknownBuild(s.to_string()))
    }
}

/// Body proportions, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    /// Rest-pose vertical joint extent of the skeleton.
    pub height: f64,
    /// Distance between the two shoulder joints.
    pub shoulder_width: f64,
    /// Circumference of the torso cross-section.
    pub torso_girth: f64,
    /// Circumference of the thigh; other limb radii are fixed fractions of it.
    pub limb_girth: f64,
}

fn body_skeleton(skeleton: &Skeleton, p: &BodyParams) -> Result<Skeleton, MeshError> {
    if !skeleton.is_smpl24() {
        return Err(MeshError::NotSmplSkeleton);
    }
    let h = skeleton.rest_height();
    if !(h > 0.0) {
        return Err(crate::kinematics::KinematicsError::ZeroHeight.into());
    }
    let mut s = skeleton.scaled(p.height / h);
    let rest = s.rest_positions();
    for (shoulder, collar, sign) in [(L_SHOULDER, L_COLLAR, 1.0), (R_SHOULDER, R_COLLAR, -1.0)] {
        let mut o = s.rest_offset(shoulder);
        o.x = sign * 0.5 * p.shoulder_width - rest[collar].x;
        s = s.with_offset(shoulder, o)?;
    }
    Ok(s)
}

fn capsule_layout(s: &Skeleton, p: &BodyParams) -> Vec<BodyCapsule> {
    let k = p.height / DEFAULT_HEIGHT;
    let pos = s.rest_positions();
    let thigh = p.limb_girth / TAU;
    let spread = 0.11 * p.shoulder_width;
    let torso = (p.torso_girth - 4.0 * spread) / TAU;
    let mut out = Vec::new();
    let mut push = |joint: usize, a: Vec3, b: Vec3, radius: f64| {
        out.push(BodyCapsule { joint, capsule: Capsule::new(a, b, radius) });
    };
    let side = Vec3::new(spread, 0.0, 0.0);
    let shoulder_top = pos[L_COLLAR].y - 0.5 * torso;
    let chest_top = Vec3::new(0.0, shoulder_top, 0.0);
    for (j, a, b) in [
        (PELVIS, pos[PELVIS], pos[SPINE1]),
        (SPINE1, pos[SPINE1], pos[SPINE2]),
        (SPINE2, pos[SPINE2], pos[SPINE3]),
        (SPINE3, pos[SPINE3], chest_top),
    ] {
        push(j, a + side, b + side, torso);
        push(j, a - side, b - side, torso);
    }
    push(PELVIS, pos[L_HIP], pos[R_HIP], 1.1 * thigh);
    push(SPINE3, pos[SPINE3], pos[NECK], 0.055 * k);
    push(NECK, pos[NECK], pos[HEAD], 0.05 * k);
    push(HEAD, pos[HEAD], pos[HEAD] + Vec3::new(0.0, 0.07 * k, 0.0), 0.09 * k);
    for (collar, shoulder, elbow, wrist, hand) in
        [(L_COLLAR, L_SHOULDER, L_ELBOW, L_WRIST, L_HAND), (R_COLLAR, R_SHOULDER, R_ELBOW, R_WRIST, R_HAND)]
    {
        push(collar, pos[collar], pos[shoulder], 0.6 * thigh);
        push(shoulder, pos[shoulder], pos[elbow], 0.55 * thigh);
        push(elbow, pos[elbow], pos[wrist], 0.43 * thigh);
        push(wrist, pos[wrist], pos[hand], 0.35 * thigh);
        let out_dir = (pos[hand] - pos[wrist]).normalize();
        push(hand, pos[hand], pos[hand] + out_dir * 0.08 * k, 0.28 * thigh);
    }
    for (hip, knee, ankle, foot) in [(L_HIP, L_KNEE, L_ANKLE, L_FOOT), (R_HIP, R_KNEE, R_ANKLE, R_FOOT)] {
        push(hip, pos[hip], pos[knee], thigh);
        push(knee, pos[knee], pos[ankle], 0.68 * thigh);
        push(ankle, pos[ankle], pos[foot], 0.45 * thigh);
        push(foot, pos[foot], pos[foot] + Vec3::new(0.0, 0.0, 0.06 * k), 0.35 * thigh);
    }
    out
}

/// Union signed distance (negative inside).
fn union_sdf(capsules: &[BodyCapsule], p: &Vec3) -> f64 {
    capsules.iter().map(|c| c.capsule.signed_distance(p)).fold(f64::INFINITY, f64::min)
}

/// Marching tetrahedra over a Freudenthal split of the grid. Triangle
/// vertices are keyed by grid edge, so shared edges yield shared vertices and
/// the surface is closed wherever the function is positive on the grid border.
fn marching_tetrahedra(f: impl Fn(&Vec3) -> f64, lo: Vec3, n: [usize; 3], h: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let [nx, ny, nz] = n;
    let id = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
    let point = |i: usize, j: usize, k: usize| lo + Vec3::new(i as f64, j as f64, k as f64) * h;
    let eps = 1e-7 * h;
    let mut values = vec![0.0; nx * ny * nz];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let v = f(&point(i, j, k));
                values[id(i, j, k)] = if v.abs() < eps { if v < 0.0 { -eps } else { eps } } else { v };
            }
        }
    }
    const TETS: [[usize; 4]; 6] =
        [[0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7], [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7]];
    let mut verts: Vec<Vec3> = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            for k in 0..nz - 1 {
                let corner = |c: usize| (i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let ids: [usize; 8] = std::array::from_fn(|c| {
                    let (a, b, d) = corner(c);
                    id(a, b, d)
                });
                let inside_count = ids.iter().filter(|&&g| values[g] < 0.0).count();
                if inside_count == 0 || inside_count == 8 {
                    continue;
                }
                let pts: [Vec3; 8] = std::array::from_fn(|c| {
                    let (a, b, d) = corner(c);
                    point(a, b, d)
                });
                for tet in TETS {
                    let (ins, outs): (Vec<usize>, Vec<usize>) =
                        tet.iter().partition(|&&c| values[ids[c]] < 0.0);
                    if ins.is_empty() || outs.is_empty() {
                        continue;
                    }
                    let mut ev = |a: usize, b: usize| -> usize {
                        let (ga, gb) = (ids[a], ids[b]);
                        let key = if ga < gb { (ga, gb) } else { (gb, ga) };
                        *edge_vertex.entry(key).or_insert_with(|| {
                            let (fa, fb) = (values[ga], values[gb]);
                            let t = fa / (fa - fb);
                            verts.push(pts[a] + (pts[b] - pts[a]) * t);
                            verts.len() - 1
                        })
                    };
                    let centroid = |cs: &[usize]| cs.iter().map(|&c| pts[c]).sum::<Vec3>() / cs.len() as f64;
                    let outward = centroid(&outs) - centroid(&ins);
                    let mut tri = |mut t: [usize; 3], verts: &Vec<Vec3>| {
                        let n = (verts[t[1]] - verts[t[0]]).cross(&(verts[t[2]] - verts[t[0]]));
                        if n.dot(&outward) < 0.0 {
                            t.swap(1, 2);
                        }
                        faces.push(t);
                    };
                    match (ins.len(), outs.len()) {
                        (1, 3) => {
                            let t = [ev(ins[0], outs[0]), ev(ins[0], outs[1]), ev(ins[0], outs[2])];
                            tri(t, &verts);
                        }
                        (3, 1) => {
                            let t = [ev(ins[0], outs[0]), ev(ins[1], outs[0]), ev(ins[2], outs[0])];
                            tri(t, &verts);
                        }
                        _ => {
                            let (a, b, c, d) = (ins[0], ins[1], outs[0], outs[1]);
                            let q = [ev(a, c), ev(a, d), ev(b, d), ev(b, c)];
                            let area = |x: usize, y: usize, z: usize| {
                                (verts[y] - verts[x]).cross(&(verts[z] - verts[x])).norm()
                            };
                            let split02 = area(q[0], q[1], q[2]).min(area(q[0], q[2], q[3]));
                            let split13 = area(q[0], q[1], q[3]).min(area(q[1], q[2], q[3]));
                            if split02 >= split13 {
                                tri([q[0], q[1], q[2]], &verts);
                                tri([q[0], q[2], q[3]], &verts);
                            } else {
                                tri([q[0], q[1], q[3]], &verts);
                                tri([q[1], q[2], q[3]], &verts);
                            }
                        }
                    }
                }
            }
        }
    }
    (verts, faces)
}

/// Nearest-bone weights with exponential falloff, top four joints, normalized.
pub(crate) fn bone_weights(capsules: &[BodyCapsule], p: &Vec3) -> VertexWeights {
    let d: Vec<f64> = capsules.iter().map(|c| c.capsule.signed_distance(p)).collect();
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let mut per_joint: Vec<(usize, f64)> = Vec::new();
    for (c, di) in capsules.iter().zip(&d) {
        let w = (-(di - dmin) / WEIGHT_FALLOFF).exp();
        match per_joint.iter_mut().find(|(j, _)| *j == c.joint) {
            Some(e) => e.1 += w,
            None => per_joint.push((c.joint, w)),
        }
    }
    per_joint.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    per_joint.truncate(MAX_INFLUENCES);
    let sum: f64 = per_joint.iter().map(|e| e.1).sum();
    for e in &mut per_joint {
        e.1 /= sum;
    }
    per_joint.sort_by_key(|e| e.0);
    per_joint
}

/// Marker sites lie off the joint along the world z axis (front/back),
/// except at ankles and feet whose bones run along z, where x is used.
pub(crate) fn lateral_axis(joint: usize) -> Vec3 {
    match joint {
        L_ANKLE | R_ANKLE | L_FOOT | R_FOOT => Vec3::x(),
        _ => Vec3::z(),
    }
}

pub fn build_parametric_body(label: BuildLabel, skeleton: &Skeleton) -> Result<SkinnedBody, MeshError> {
    let params = label.params();
    let skeleton = body_skeleton(skeleton, &params)?;
    let capsules = capsule_layout(&skeleton, &params);

    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for c in &capsules {
        let (a, b) = c.capsule.aabb(2.0 * GRID_STEP);
        lo = lo.inf(&a);
        hi = hi.sup(&b);
    }
    let n: [usize; 3] = std::array::from_fn(|i| ((hi[i] - lo[i]) / GRID_STEP).ceil() as usize + 1);
    let (mut verts, mut faces) = marching_tetrahedra(|p| union_sdf(&capsules, p), lo, n, GRID_STEP);
    let mut weights: Vec<VertexWeights> = verts.iter().map(|p| bone_weights(&capsules, p)).collect();

    // Splice in the marker sites: each site vertex splits the face its ray
    // hits and is bound rigidly to its joint, so the two sites of a pair stay
    // symmetric about the joint in every pose.
    let rest = skeleton.rest_positions();
    let mut sites: Vec<(usize, usize, usize, Vec3)> = Vec::new();
    for joint in 0..skeleton.len() {
        let lat = lateral_axis(joint);
        let mesh = TriMesh::new(verts.clone(), faces.clone())?;
        let hits: Vec<_> = [lat, -lat]
            .iter()
            .map(|d| mesh.raycast(&rest[joint], d).ok_or(MeshError::SiteMissed { joint }))
            .collect::<Result<_, _>>()?;
        let reach = hits[0].t.max(hits[1].t) + MARKER_BASE_HEIGHT;
        for (slot, dir) in [lat, -lat].into_iter().enumerate() {
            // Splitting rewrites only the hit face in place, so the other
            // side's face index stays valid.
            let face = hits[slot].point.face;
            let v = verts.len();
            verts.push(rest[joint] + dir * reach);
            weights.push(vec![(joint, 1.0)]);
            let [a, b, c] = faces[face];
            faces[face] = [a, b, v];
            faces.push([b, c, v]);
            faces.push([c, a, v]);
            sites.push((joint, slot, v, dir));
        }
    }
    let template = TriMesh::new(verts, faces)?;
    validate_weights(&weights, template.vertices().len(), skeleton.len())?;
    let mut face_of = HashMap::new();
    for (fi, f) in template.faces().iter().enumerate() {
        for (corner, &v) in f.iter().enumerate() {
            face_of.entry(v).or_insert((fi, corner));
        }
    }
    let marker_sites = sites
        .into_iter()
        .map(|(joint, slot, vertex, lateral)| {
            let (face, corner) = face_of[&vertex];
            MarkerSite { joint, slot, vertex, point: SurfacePoint::vertex(face, corner), lateral }
        })
        .collect();
    Ok(SkinnedBody { template, skeleton, weights, build_label: label, capsules, marker_sites })
}
