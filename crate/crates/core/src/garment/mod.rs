//! Procedural garments at a target drape class, and the drape ratio itself.
//!
//! A garment is a set of open tubes, each following a body segment. A tube's
//! radius in every direction starts at the exit distance of the segment's
//! capsules (skin-tight) and is scaled by `1 + slack·ramp`, where the ramp is
//! zero at the pinned end ring and one further along. The covered body is the
//! same tube set at zero slack, so both volumes are measured on identical
//! topology and the ratio is exactly zero for a skin-tight piece.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::smpl::*;
use crate::kinematics::JointTransform;
use crate::mesh::{cap_boundaries, enclosed_volume, skin_points, BuildLabel, Capsule, MeshError, SkinnedBody, TriMesh, VertexWeights};
use crate::Vec3;

/// Upper bound of the slack search.
pub const MAX_SLACK: f64 = 3.0;
pub const MAX_BISECTION_STEPS: usize = 40;

const RING_SPACING: f64 = 0.025;
const MIN_RADIUS: f64 = 0.01;
const RAMP_LENGTH: f64 = 0.10;
/// Bisection stops once the drape is this close to the class target.
const TARGET_TOLERANCE: f64 = 0.002;

#[derive(Debug, Error, PartialEq)]
pub enum GarmentError {
    #[error("drape class {0} is outside 1..=6")]
    BadClass(u8),
    #[error("drape table boundaries must be finite, positive and strictly increasing: {0:?}")]
    BadTable(Vec<f64>),
    #[error("covered body volume {0} is not positive")]
    NonPositiveBodyVolume(f64),
    #[error("drape class {class} unreachable: slack in [0, {MAX_SLACK}] gives drape {min:.4}..{max:.4}")]
    Unreachable { class: u8, min: f64, max: f64 },
    #[error("garment specified for build {spec} but body is {body}")]
    BuildMismatch { spec: BuildLabel, body: BuildLabel },
    #[error("body has no capsules; use build_parametric_body")]
    NoCapsules,
    #[error("unknown garment category {0:?}")]
    UnknownCategory(String),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GarmentCategory {
    Tshirt,
    Trousers,
    Unicloth,
}

impl GarmentCategory {
    pub const ALL: [GarmentCategory; 3] = [Self::Tshirt, Self::Trousers, Self::Unicloth];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tshirt => "tshirt",
            Self::Trousers => "trousers",
            Self::Unicloth => "unicloth",
        }
    }
}

impl fmt::Display for GarmentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GarmentCategory {
    type Err = GarmentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| GarmentError::UnknownCategory(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GarmentSpec {
    pub category: GarmentCategory,
    pub target_class: u8,
    pub body: BuildLabel,
}

impl GarmentSpec {
    pub fn new(category: GarmentCategory, target_class: u8, body: BuildLabel) -> Result<Self, GarmentError> {
        if !(1..=6).contains(&target_class) {
            return Err(GarmentError::BadClass(target_class));
        }
        Ok(Self { category, target_class, body })
    }
}

/// Six half-open drape intervals `[0,b1), [b1,b2), ..., [b5,∞)`.
///
/// The default boundaries are engine constants chosen to spread skin-tight to
/// very loose garments over the six classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DrapeClassTable {
    boundaries: [f64; 5],
}

impl Default for DrapeClassTable {
    fn default() -> Self {
        Self { boundaries: [0.05, 0.15, 0.30, 0.60, 1.00] }
    }
}

impl TryFrom<Vec<f64>> for DrapeClassTable {
    type Error = GarmentError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let bad = || GarmentError::BadTable(v.clone());
        let boundaries: [f64; 5] = v.as_slice().try_into().map_err(|_| bad())?;
        let ok = boundaries.iter().all(|b| b.is_finite() && *b > 0.0) && boundaries.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(bad());
        }
        Ok(Self { boundaries })
    }
}

impl From<DrapeClassTable> for Vec<f64> {
    fn from(t: DrapeClassTable) -> Self {
        t.boundaries.to_vec()
    }
}

impl DrapeClassTable {
    pub fn new(boundaries: [f64; 5]) -> Result<Self, GarmentError> {
        boundaries.to_vec().try_into()
    }

    pub fn boundaries(&self) -> [f64; 5] {
        self.boundaries
    }

    /// Class 1..=6 of a ratio. Values below zero (or NaN) count as class 1.
    pub fn classify(&self, ratio: f64) -> u8 {
        1 + self.boundaries.iter().filter(|&&b| ratio >= b).count() as u8
    }

    /// `[lo, hi)` of a class; class 6 has `hi = ∞`.
    pub fn interval(&self, class: u8) -> Result<(f64, f64), GarmentError> {
        let c = class as usize;
        if !(1..=6).contains(&c) {
            return Err(GarmentError::BadClass(class));
        }
        let lo = if c == 1 { 0.0 } else { self.boundaries[c - 2] };
        let hi = if c == 6 { f64::INFINITY } else { self.boundaries[c - 1] };
        Ok((lo, hi))
    }

    /// Bisection target: the interval midpoint, or `1.2 ×` the last boundary
    /// for the unbounded class.
    pub fn target(&self, class: u8) -> Result<f64, GarmentError> {
        let (lo, hi) = self.interval(class)?;
        Ok(if hi.is_finite() { 0.5 * (lo + hi) } else { 1.2 * lo })
    }
}

/// Class of a drape ratio under the default table.
pub fn classify_drape(ratio: f64) -> u8 {
    DrapeClassTable::default().classify(ratio)
}

/// `(V_garment − V_covered) / V_covered` for two closed meshes.
pub fn measure_drape(garment: &TriMesh, covered_body: &TriMesh) -> Result<f64, GarmentError> {
    let vc = enclosed_volume(covered_body)?;
    let vg = enclosed_volume(garment)?;
    drape_from_volumes(vg, vc)
}

fn drape_from_volumes(vg: f64, vc: f64) -> Result<f64, GarmentError> {
    if !(vc > 0.0) {
        return Err(GarmentError::NonPositiveBodyVolume(vc));
    }
    let d = (vg - vc) / vc;
    if d < 0.0 {
        log::warn!("garment volume {vg} is below covered body volume {vc}; drape clamped to 0");
        return Ok(0.0);
    }
    Ok(d)
}

/// Placement of one tube inside the garment vertex array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeInfo {
    pub name: String,
    pub first_vertex: usize,
    pub rings: usize,
    pub around: usize,
}

/// A generated garment in the rest pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Garment {
    pub categories: Vec<GarmentCategory>,
    pub target_class: u8,
    /// Slack of each category, in `categories` order.
    pub slack: Vec<f64>,
    pub drape: f64,
    /// Open tubes, the simulated cloth.
    pub mesh: TriMesh,
    /// The zero-slack tubes, capped.
    pub covered_body: TriMesh,
    pub pinned: Vec<usize>,
    /// Skinning weights used to pose the cloth at frame 0 and to drive the pins.
    pub weights: Vec<VertexWeights>,
    pub tubes: Vec<TubeInfo>,
    garment_volume: f64,
    covered_volume: f64,
}

impl Garment {
    /// Capped copy of the cloth mesh.
    pub fn closed(&self) -> Result<TriMesh, GarmentError> {
        Ok(cap_boundaries(&self.mesh)?)
    }

    /// Skinned vertex positions for a pose of the body skeleton.
    pub fn posed_vertices(&self, body: &SkinnedBody, transforms: &[JointTransform]) -> Vec<Vec3> {
        skin_points(self.mesh.vertices(), &self.weights, &body.skeleton.rest_positions(), transforms)
    }

    /// Pin targets for a pose, in `pinned` order.
    pub fn pin_targets(&self, body: &SkinnedBody, transforms: &[JointTransform]) -> Vec<Vec3> {
        let pts: Vec<Vec3> = self.pinned.iter().map(|&i| self.mesh.vertices()[i]).collect();
        let w: Vec<VertexWeights> = self.pinned.iter().map(|&i| self.weights[i].clone()).collect();
        skin_points(&pts, &w, &body.skeleton.rest_positions(), transforms)
    }

    /// Joins pieces generated at one class into a single garment. The joint
    /// drape is a volume-weighted mean of the pieces, so it stays in class.
    pub fn combine(parts: &[Garment]) -> Result<Garment, GarmentError> {
        let first = parts.first().ok_or(GarmentError::BadClass(0))?;
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        let mut cverts = Vec::new();
        let mut cfaces = Vec::new();
        let mut out = Garment {
            categories: Vec::new(),
            target_class: first.target_class,
            slack: Vec::new(),
            drape: 0.0,
            mesh: first.mesh.clone(),
            covered_body: first.covered_body.clone(),
            pinned: Vec::new(),
            weights: Vec::new(),
            tubes: Vec::new(),
            garment_volume: 0.0,
            covered_volume: 0.0,
        };
        for p in parts {
            if p.target_class != out.target_class {
                return Err(GarmentError::BadClass(p.target_class));
            }
            let base = verts.len();
            verts.extend_from_slice(p.mesh.vertices());
            faces.extend(p.mesh.faces().iter().map(|f| f.map(|i| i + base)));
            let cbase = cverts.len();
            cverts.extend_from_slice(p.covered_body.vertices());
            cfaces.extend(p.covered_body.faces().iter().map(|f| f.map(|i| i + cbase)));
            out.pinned.extend(p.pinned.iter().map(|i| i + base));
            out.weights.extend(p.weights.iter().cloned());
            out.tubes.extend(p.tubes.iter().map(|t| TubeInfo { first_vertex: t.first_vertex + base, ..t.clone() }));
            out.categories.extend_from_slice(&p.categories);
            out.slack.extend_from_slice(&p.slack);
            out.garment_volume += p.garment_volume;
            out.covered_volume += p.covered_volume;
        }
        out.mesh = TriMesh::new(verts, faces)?;
        out.covered_body = TriMesh::new(cverts, cfaces)?;
        out.drape = drape_from_volumes(out.garment_volume, out.covered_volume)?;
        Ok(out)
    }
}

/// One tube: rings along `a → b`, `around` vertices per ring.
struct Tube {
    name: String,
    a: Vec3,
    axis: Vec3,
    length: f64,
    rings: usize,
    around: usize,
    /// Skin-tight radius per (ring, direction).
    profile: Vec<f64>,
    dirs: Vec<Vec3>,
}

impl Tube {
    fn new(name: &str, a: Vec3, b: Vec3, around: usize, own: &[Capsule]) -> Self {
        let length = (b - a).norm();
        let axis = (b - a) / length;
        let reference = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
        let e1 = (reference - axis * axis.dot(&reference)).normalize();
        let e2 = axis.cross(&e1);
        let dirs: Vec<Vec3> = (0..around)
            .map(|k| {
                let phi = std::f64::consts::TAU * k as f64 / around as f64;
                e1 * phi.cos() + e2 * phi.sin()
            })
            .collect();
        let rings = ((length / RING_SPACING).ceil() as usize + 1).max(3);
        let mut profile = Vec::with_capacity(rings * around);
        for i in 0..rings {
            let o = a + axis * (length * i as f64 / (rings - 1) as f64);
            for d in &dirs {
                let r = own.iter().filter_map(|c| c.ray_exit(&o, d)).fold(MIN_RADIUS, f64::max);
                profile.push(r);
            }
        }
        Self { name: name.into(), a, axis, length, rings, around, profile, dirs }
    }

    fn ramp(&self, ring: usize) -> f64 {
        let x = self.length * ring as f64 / (self.rings - 1) as f64 / RAMP_LENGTH.min(0.5 * self.length);
        let x = x.min(1.0);
        x * x * (3.0 - 2.0 * x)
    }

    fn vertices(&self, slack: f64) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.rings * self.around);
        for i in 0..self.rings {
            let o = self.a + self.axis * (self.length * i as f64 / (self.rings - 1) as f64);
            let scale = 1.0 + slack * self.ramp(i);
            for (k, d) in self.dirs.iter().enumerate() {
                out.push(o + d * (self.profile[i * self.around + k] * scale));
            }
        }
        out
    }

    /// Outward winding: `dirs` turn positively about `axis`.
    fn faces(&self, base: usize) -> Vec<[usize; 3]> {
        let n = self.around;
        let mut out = Vec::with_capacity(2 * (self.rings - 1) * n);
        for i in 0..self.rings - 1 {
            for k in 0..n {
                let v = |r: usize, c: usize| base + r * n + c % n;
                out.push([v(i, k), v(i, k + 1), v(i + 1, k + 1)]);
                out.push([v(i, k), v(i + 1, k + 1), v(i + 1, k)]);
            }
        }
        out
    }
}

fn tube_layout(body: &SkinnedBody, category: GarmentCategory) -> Vec<Tube> {
    let pos = body.skeleton.rest_positions();
    let k = body.build_label.params().height / DEFAULT_HEIGHT;
    let own = |joints: &[usize]| -> Vec<Capsule> {
        body.capsules.iter().filter(|c| joints.contains(&c.joint)).map(|c| c.capsule).collect()
    };
    let up = Vec3::y();
    let hand_len = |hand: usize| {
        body.capsules.iter().filter(|c| c.joint == hand).map(|c| (c.capsule.b - c.capsule.a).norm() + c.capsule.radius).fold(0.0, f64::max)
    };
    let toe_len = |foot: usize| {
        body.capsules.iter().filter(|c| c.joint == foot).map(|c| (c.capsule.b - c.capsule.a).norm() + c.capsule.radius).fold(0.0, f64::max)
    };
    let centre = |y: f64| Vec3::new(pos[PELVIS].x, y, pos[PELVIS].z);
    let waist = pos[PELVIS].y + 0.06 * k;
    let torso_joints = [PELVIS, SPINE1, SPINE2, SPINE3, L_COLLAR, R_COLLAR];
    let sides = [
        ("left", L_COLLAR, L_SHOULDER, L_ELBOW, L_WRIST, L_HAND, L_HIP, L_KNEE, L_ANKLE, L_FOOT),
        ("right", R_COLLAR, R_SHOULDER, R_ELBOW, R_WRIST, R_HAND, R_HIP, R_KNEE, R_ANKLE, R_FOOT),
    ];
    let mut tubes = Vec::new();
    let pelvis_tube =
        || Tube::new("pelvis", centre(waist), centre(pos[L_HIP].y), 32, &own(&[PELVIS, L_HIP, R_HIP]));
    match category {
        GarmentCategory::Tshirt => {
            let top = pos[NECK] - up * 0.02 * k;
            tubes.push(Tube::new("torso", top, centre(pos[PELVIS].y + 0.02 * k), 32, &own(&torso_joints)));
            for (side, collar, shoulder, elbow, ..) in sides {
                let dir = (pos[elbow] - pos[shoulder]).normalize();
                let a = pos[shoulder] - dir * 0.02 * k;
                tubes.push(Tube::new(&format!("{side}_sleeve"), a, pos[shoulder] + dir * 0.13 * k, 16, &own(&[collar, shoulder])));
            }
        }
        GarmentCategory::Trousers => {
            tubes.push(pelvis_tube());
            for (side, .., hip, knee, ankle, _) in sides {
                let leg = own(&[hip, knee]);
                tubes.push(Tube::new(&format!("{side}_leg"), pos[hip] + up * 0.02 * k, pos[ankle] + up * 0.02 * k, 16, &leg));
            }
        }
        GarmentCategory::Unicloth => {
            let top = pos[NECK] - up * 0.03 * k;
            tubes.push(Tube::new("torso", top, centre(waist), 32, &own(&torso_joints)));
            tubes.push(pelvis_tube());
            let head_top = body
                .capsules
                .iter()
                .filter(|c| c.joint == HEAD)
                .map(|c| c.capsule.b.y.max(c.capsule.a.y) + c.capsule.radius)
                .fold(pos[HEAD].y, f64::max);
            let hood_base = pos[NECK] - up * 0.02 * k;
            tubes.push(Tube::new("hood", hood_base, Vec3::new(pos[HEAD].x, head_top, pos[HEAD].z), 16, &own(&[NECK, HEAD])));
            for (side, collar, shoulder, elbow, wrist, hand, hip, knee, ankle, foot) in sides {
                let dir = (pos[elbow] - pos[shoulder]).normalize();
                let a = pos[shoulder] - dir * 0.02 * k;
                let tip = pos[hand] + (pos[hand] - pos[wrist]).normalize() * hand_len(hand);
                tubes.push(Tube::new(&format!("{side}_sleeve"), a, tip, 16, &own(&[collar, shoulder, elbow, wrist, hand])));
                let leg = own(&[hip, knee, ankle]);
                tubes.push(Tube::new(&format!("{side}_leg"), pos[hip] + up * 0.02 * k, pos[ankle] - up * 0.02 * k, 16, &leg));
                let toe = pos[foot] + Vec3::z() * toe_len(foot);
                tubes.push(Tube::new(&format!("{side}_foot"), pos[ankle], toe, 16, &own(&[ankle, foot])));
            }
        }
    }
    tubes
}

struct TubeSet {
    tubes: Vec<Tube>,
    faces: Vec<[usize; 3]>,
}

impl TubeSet {
    fn new(tubes: Vec<Tube>) -> Self {
        let mut faces = Vec::new();
        let mut base = 0;
        for t in &tubes {
            faces.extend(t.faces(base));
            base += t.rings * t.around;
        }
        Self { tubes, faces }
    }

    fn mesh(&self, slack: f64) -> Result<TriMesh, MeshError> {
        let verts: Vec<Vec3> = self.tubes.iter().flat_map(|t| t.vertices(slack)).collect();
        TriMesh::new(verts, self.faces.clone())
    }

    fn volume(&self, slack: f64) -> Result<f64, MeshError> {
        enclosed_volume(&cap_boundaries(&self.mesh(slack)?)?)
    }
}

/// Drape of a category's tube set at a given slack, without classification.
pub fn drape_at_slack(body: &SkinnedBody, category: GarmentCategory, slack: f64) -> Result<f64, GarmentError> {
    if body.capsules.is_empty() {
        return Err(GarmentError::NoCapsules);
    }
    let set = TubeSet::new(tube_layout(body, category));
    drape_from_volumes(set.volume(slack)?, set.volume(0.0)?)
}

/// Generates a garment under the default drape table.
pub fn generate_garment(body: &SkinnedBody, spec: &GarmentSpec) -> Result<Garment, GarmentError> {
    generate_garment_with(body, spec, &DrapeClassTable::default())
}

/// Bisects the slack toward the target class midpoint; the closest in-class
/// step is kept.
pub fn generate_garment_with(
    body: &SkinnedBody,
    spec: &GarmentSpec,
    table: &DrapeClassTable,
) -> Result<Garment, GarmentError> {
    let spec = GarmentSpec::new(spec.category, spec.target_class, spec.body)?;
    if spec.body != body.build_label {
        return Err(GarmentError::BuildMismatch { spec: spec.body, body: body.build_label });
    }
    if body.capsules.is_empty() {
        return Err(GarmentError::NoCapsules);
    }
    let set = TubeSet::new(tube_layout(body, spec.category));
    let covered_body = cap_boundaries(&set.mesh(0.0)?)?;
    let vc = enclosed_volume(&covered_body)?;
    let drape_at = |s: f64| -> Result<f64, GarmentError> { drape_from_volumes(set.volume(s)?, vc) };

    let class = spec.target_class;
    let target = table.target(class)?;
    let (mut lo, mut hi) = (0.0, MAX_SLACK);
    let (d_lo, d_hi) = (drape_at(lo)?, drape_at(hi)?);
    let mut found: Option<(f64, f64)> = None;
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let d = drape_at(mid)?;
        if table.classify(d) == class && found.is_none_or(|(_, best)| (d - target).abs() < (best - target).abs()) {
            found = Some((mid, d));
        }
        if (d - target).abs() <= TARGET_TOLERANCE {
            break;
        }
        if d < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (slack, drape) = found.ok_or(GarmentError::Unreachable { class, min: d_lo, max: d_hi })?;

    let mesh = set.mesh(slack)?;
    let mut pinned = Vec::new();
    let mut tubes = Vec::new();
    let mut base = 0;
    for t in &set.tubes {
        pinned.extend(base..base + t.around);
        tubes.push(TubeInfo { name: t.name.clone(), first_vertex: base, rings: t.rings, around: t.around });
        base += t.rings * t.around;
    }
    let weights = mesh.vertices().iter().map(|v| body.weights_at(v)).collect();
    Ok(Garment {
        categories: vec![spec.category],
        target_class: class,
        slack: vec![slack],
        drape,
        garment_volume: vc * (1.0 + drape),
        covered_volume: vc,
        mesh,
        covered_body,
        pinned,
        weights,
        tubes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_boundaries_are_half_open() {
        let t = DrapeClassTable::default();
        assert_eq!(t.classify(0.0), 1);
        assert_eq!(t.classify(0.0499), 1);
        assert_eq!(t.classify(0.05), 2);
        assert_eq!(t.classify(0.30), 4);
        assert_eq!(t.classify(1.0), 6);
        assert_eq!(t.classify(50.0), 6);
        assert_eq!(classify_drape(0.2), 3);
    }

    #[test]
    fn table_validation() {
        assert!(DrapeClassTable::new([0.1, 0.05, 0.3, 0.6, 1.0]).is_err());
        assert!(DrapeClassTable::new([0.0, 0.05, 0.3, 0.6, 1.0]).is_err());
        assert!(DrapeClassTable::try_from(vec![0.1, 0.2]).is_err());
        let t: DrapeClassTable = serde_json::from_str("[0.1,0.2,0.3,0.4,0.5]").unwrap();
        assert_eq!(t.classify(0.45), 5);
        assert!(serde_json::from_str::<DrapeClassTable>("[0.1,0.2,0.3,0.4,0.4]").is_err());
    }

    #[test]
    fn targets_sit_inside_their_class() {
        let t = DrapeClassTable::default();
        for c in 1..=6u8 {
            assert_eq!(t.classify(t.target(c).unwrap()), c);
        }
        assert_eq!(t.target(7), Err(GarmentError::BadClass(7)));
    }

    #[test]
    fn bad_spec_class() {
        assert!(GarmentSpec::new(GarmentCategory::Tshirt, 0, BuildLabel::MaleMedium).is_err());
        assert!(GarmentSpec::new(GarmentCategory::Tshirt, 7, BuildLabel::MaleMedium).is_err());
    }

    #[test]
    fn negative_drape_is_clamped() {
        assert_eq!(drape_from_volumes(0.5, 1.0), Ok(0.0));
        assert!(matches!(drape_from_volumes(1.0, 0.0), Err(GarmentError::NonPositiveBodyVolume(_))));
    }
}
