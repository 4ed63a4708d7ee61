//! Triangle meshes: validation, volume, boundary capping, surface points,
//! ray casting and Wavefront OBJ interchange.

mod body;
mod capsule;
pub mod primitives;
mod skinning;

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

pub use body::{build_parametric_body, BodyParams, BuildLabel, MARKER_BASE_HEIGHT};
pub use capsule::Capsule;
pub(crate) use skinning::skin_points;
pub use skinning::{skin_lbs, BodyCapsule, MarkerSite, SkinnedBody, VertexWeights};

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {face} has zero area")]
    DegenerateFace { face: usize },
    #[error("vertex {vertex} is not finite")]
    NonFinite { vertex: usize },
    #[error("mesh is not watertight ({boundary_edges} boundary edges); call cap_boundaries first")]
    NotWatertight { boundary_edges: usize },
    #[error("edge ({0}, {1}) is shared by more than two faces")]
    NonManifoldEdge(usize, usize),
    #[error("boundary loop through vertex {0} is not simple")]
    NonSimpleBoundary(usize),
    #[error("face index {face} out of range ({count} faces)")]
    FaceOutOfRange { face: usize, count: usize },
    #[error("barycentric weights {0:?} must be non-negative and sum to 1")]
    BadBarycentric([f64; 3]),
    #[error("expected {expected} vertex positions, got {found}")]
    VertexCountMismatch { expected: usize, found: usize },
    #[error("expected {expected} weight entries, got {found}")]
    WeightCountMismatch { expected: usize, found: usize },
    #[error("vertex {vertex} has invalid skinning weights: {reason}")]
    BadWeights { vertex: usize, reason: String },
    #[error("expected {expected} joint transforms, got {found}")]
    TransformCountMismatch { expected: usize, found: usize },
    #[error("obj line {line}: {message}")]
    Obj { line: usize, message: String },
    #[error("skeleton must be the 24-joint SMPL hierarchy")]
    NotSmplSkeleton,
    #[error("unknown build label {0:?}")]
    UnknownBuild(String),
    #[error("marker site ray from joint {joint} missed the body surface")]
    SiteMissed { joint: usize },
    #[error("kinematics: {0}")]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}

/// Indexed triangle mesh with counter-clockwise (outward) winding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    watertight: bool,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if let Some(vertex) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite { vertex });
        }
        for (face, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange { face, index, count: vertices.len() });
            }
            let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            if n.norm() == 0.0 || f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace { face });
            }
        }
        let mut mesh = Self { vertices, faces, watertight: false };
        mesh.watertight = mesh.boundary_edge_count() == 0 && !mesh.faces.is_empty();
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    /// Undirected edge use counts.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::with_capacity(self.faces.len() * 3 / 2);
        for f in &self.faces {
            for k in 0..3 {
                *counts.entry(edge_key(f[k], f[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edge_counts().values().filter(|&&c| c != 2).count()
    }

    /// Same topology with new vertex positions (validated).
    pub fn with_positions(&self, vertices: Vec<Vec3>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::VertexCountMismatch {
                expected: self.vertices.len(),
                found: vertices.len(),
            });
        }
        if let Some(vertex) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite { vertex });
        }
        Ok(self.with_positions_unchecked(vertices))
    }

    /// Deformed copy; deformation may legitimately collapse faces, so areas are not rechecked.
    pub(crate) fn with_positions_unchecked(&self, vertices: Vec<Vec3>) -> Self {
        Self { vertices, faces: self.faces.clone(), watertight: self.watertight }
    }

    pub fn translated(&self, t: Vec3) -> Self {
        self.with_positions_unchecked(self.vertices.iter().map(|v| v + t).collect())
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.faces[face];
        let v = &self.vertices;
        (v[b] - v[a]).cross(&(v[c] - v[a])).normalize()
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        self.vertices.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), v| (lo.inf(v), hi.sup(v)),
        )
    }

    /// Nearest intersection with `t > 0` along `origin + t·dir`.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for (face, f) in self.faces.iter().enumerate() {
            let (a, b, c) = (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
            if let Some((t, u, v)) = ray_triangle(origin, dir, &a, &b, &c) {
                if best.as_ref().is_none_or(|h| t < h.t) {
                    best = Some(RayHit {
                        t,
                        point: SurfacePoint { face, barycentric: [1.0 - u - v, u, v] },
                    });
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub point: SurfacePoint,
}

/// Möller–Trumbore; returns `(t, u, v)` with the hit at `(1-u-v)·a + u·b + v·c`.
fn ray_triangle(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-12).then_some((t, u, v))
}

/// A point on a mesh face in barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub face: usize,
    pub barycentric: [f64; 3],
}

impl SurfacePoint {
    pub fn new(face: usize, barycentric: [f64; 3]) -> Result<Self, MeshError> {
        let sum: f64 = barycentric.iter().sum();
        if barycentric.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(MeshError::BadBarycentric(barycentric));
        }
        Ok(Self { face, barycentric })
    }

    pub fn vertex(face: usize, corner: usize) -> Self {
        let mut barycentric = [0.0; 3];
        barycentric[corner] = 1.0;
        Self { face, barycentric }
    }
}

pub fn surface_point_position(mesh: &TriMesh, sp: &SurfacePoint) -> Result<Vec3, MeshError> {
    let f = mesh
        .faces
        .get(sp.face)
        .ok_or(MeshError::FaceOutOfRange { face: sp.face, count: mesh.faces.len() })?;
    let [w0, w1, w2] = sp.barycentric;
    let v = &mesh.vertices;
    Ok(v[f[0]] * w0 + v[f[1]] * w1 + v[f[2]] * w2)
}

/// Signed volume enclosed by a watertight mesh.
pub fn enclosed_volume(mesh: &TriMesh) -> Result<f64, MeshError> {
    if !mesh.watertight {
        return Err(MeshError::NotWatertight { boundary_edges: mesh.boundary_edge_count() });
    }
    Ok(signed_volume(mesh))
}

/// The tetrahedron sum without the watertightness check. Vertices are
/// re-centred on the bounding-box centre first, which keeps the sum exact
/// under translation for closed meshes and well conditioned far from the origin.
pub(crate) fn signed_volume(mesh: &TriMesh) -> f64 {
    let (lo, hi) = mesh.bounds();
    let c = (lo + hi) * 0.5;
    let v = &mesh.vertices;
    mesh.faces
        .iter()
        .map(|f| {
            let (a, b, d) = (v[f[0]] - c, v[f[1]] - c, v[f[2]] - c);
            a.dot(&b.cross(&d))
        })
        .sum::<f64>()
        / 6.0
}

/// Closes every boundary loop with a fan to the loop's centroid.
///
/// Watertight input is returned unchanged. Cap triangles reuse each
/// boundary edge in the opposite direction, so outward winding is kept.
pub fn cap_boundaries(mesh: &TriMesh) -> Result<TriMesh, MeshError> {
    let counts = mesh.edge_counts();
    if let Some((&(a, b), _)) = counts.iter().find(|(_, &c)| c > 2) {
        return Err(MeshError::NonManifoldEdge(a, b));
    }
    if mesh.watertight {
        return Ok(mesh.clone());
    }
    // Directed boundary edges keyed by their start vertex.
    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut starts: Vec<usize> = Vec::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if counts[&edge_key(a, b)] == 1 {
                if next.insert(a, b).is_some() {
                    return Err(MeshError::NonSimpleBoundary(a));
                }
                starts.push(a);
            }
        }
    }
    let mut vertices = mesh.vertices.clone();
    let mut faces = mesh.faces.clone();
    let mut visited: HashMap<usize, bool> = HashMap::new();
    starts.sort_unstable();
    for &start in &starts {
        if visited.contains_key(&start) {
            continue;
        }
        let mut ring = vec![start];
        visited.insert(start, true);
        let mut cur = next[&start];
        while cur != start {
            if visited.contains_key(&cur) {
                return Err(MeshError::NonSimpleBoundary(cur));
            }
            visited.insert(cur, true);
            ring.push(cur);
            cur = *next.get(&cur).ok_or(MeshError::NonSimpleBoundary(cur))?;
        }
        let centroid = ring.iter().map(|&i| vertices[i]).sum::<Vec3>() / ring.len() as f64;
        let ci = vertices.len();
        vertices.push(centroid);
        for k in 0..ring.len() {
            let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
            faces.push([b, a, ci]);
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 20);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// Reads `v` and `f` records; other record types are ignored.
pub fn parse_obj(text: &str) -> Result<TriMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        let mut it = l.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| MeshError::Obj { line, message: e.to_string() })?;
                if c.len() != 3 {
                    return Err(MeshError::Obj { line, message: "vertex needs 3 coordinates".into() });
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        match first.parse::<i64>() {
                            Ok(k) if k >= 1 => Ok(k as usize - 1),
                            _ => Err(MeshError::Obj {
                                line,
                                message: format!("bad face index {t:?} (1-based, positive)"),
                            }),
                        }
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(MeshError::Obj {
                        line,
                        message: format!("only triangles are supported, got {} indices", idx.len()),
                    });
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}
