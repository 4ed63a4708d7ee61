//! Marker-less pose estimates: ingestion of externally produced joint
//! positions, mapping onto the 24-joint skeleton, height normalization, and a
//! synthetic surrogate estimator for closed-loop testing.
//!
//! Estimate files are JSON: `{"convention": "smpl24" | "h36m17" | "blaze33",
//! "fps": number, "frames": [[[x, y, z], ...], ...]}` in meters, y-up.

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::kinematics::smpl::*;
use crate::kinematics::{MotionClass, MotionSequence, Skeleton};
use crate::metrics::JointPositionsFrame;
use crate::Vec3;

/// Label carried by every surrogate estimate.
pub const SURROGATE_SOURCE: &str = "surrogate";

#[derive(Debug, Error, PartialEq)]
pub enum MarkerlessError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("estimate height is zero or not finite")]
    ZeroHeight,
    #[error("target height must be positive, got {0}")]
    BadTargetHeight(f64),
    #[error("joint map is for {map} but estimate is {estimate}")]
    MapMismatch { map: Convention, estimate: Convention },
    #[error("surrogate profile value {name} = {value} must be finite and non-negative")]
    BadProfile { name: &'static str, value: f64 },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> MarkerlessError {
    MarkerlessError::Schema { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Smpl24,
    H36m17,
    Blaze33,
}

impl Convention {
    pub const ALL: [Convention; 3] = [Self::Smpl24, Self::H36m17, Self::Blaze33];

    pub fn joint_count(self) -> usize {
        match self {
            Self::Smpl24 => 24,
            Self::H36m17 => 17,
            Self::Blaze33 => 33,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Smpl24 => "smpl24",
            Self::H36m17 => "h36m17",
            Self::Blaze33 => "blaze33",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Convention {
    type Err = MarkerlessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| schema("convention", format!("unknown convention {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalEstimate {
    pub convention: Convention,
    pub fps: f64,
    pub frames: Vec<Vec<Vec3>>,
    pub source_label: String,
}

/// Parses an estimate document. `source_label` names where it came from,
/// unless the document carries its own `source`.
pub fn ingest_estimates_str(text: &str, source_label: &str) -> Result<ExternalEstimate, MarkerlessError> {
    let root: Value = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
    let obj = root.as_object().ok_or_else(|| schema("$", "expected an object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "convention" | "fps" | "frames" | "source") {
            return Err(schema(format!("$.{key}"), "unknown field"));
        }
    }
    let convention: Convention = obj
        .get("convention")
        .ok_or_else(|| schema("$.convention", "missing"))?
        .as_str()
        .ok_or_else(|| schema("$.convention", "expected a string"))?
        .parse()
        .map_err(|e: MarkerlessError| schema("$.convention", e.to_string()))?;
    let fps = obj.get("fps").ok_or_else(|| schema("$.fps", "missing"))?.as_f64().ok_or_else(|| schema("$.fps", "expected a number"))?;
    if !(fps.is_finite() && fps > 0.0) {
        return Err(schema("$.fps", format!("must be positive, got {fps}")));
    }
    let frames_v = obj
        .get("frames")
        .ok_or_else(|| schema("$.frames", "missing"))?
        .as_array()
        .ok_or_else(|| schema("$.frames", "expected an array"))?;
    if frames_v.is_empty() {
        return Err(schema("$.frames", "no frames"));
    }
    let expected = convention.joint_count();
    let mut frames = Vec::with_capacity(frames_v.len());
    for (f, fv) in frames_v.iter().enumerate() {
        let joints = fv.as_array().ok_or_else(|| schema(format!("$.frames[{f}]"), "expected an array"))?;
        if joints.len() != expected {
            return Err(schema(
                format!("$.frames[{f}]"),
                format!("{} joints, convention {convention} has {expected}", joints.len()),
            ));
        }
        let mut row = Vec::with_capacity(expected);
        for (j, jv) in joints.iter().enumerate() {
            let path = || format!("$.frames[{f}][{j}]");
            let xyz = jv.as_array().filter(|a| a.len() == 3).ok_or_else(|| schema(path(), "expected [x, y, z]"))?;
            let mut p = Vec3::zeros();
            for (k, c) in xyz.iter().enumerate() {
                p[k] = c.as_f64().filter(|x| x.is_finite()).ok_or_else(|| schema(path(), "expected finite numbers"))?;
            }
            row.push(p);
        }
        frames.push(row);
    }
    let source_label = match obj.get("source") {
        None => source_label.to_string(),
        Some(v) => v.as_str().ok_or_else(|| schema("$.source", "expected a string"))?.to_string(),
    };
    Ok(ExternalEstimate { convention, fps, frames, source_label })
}

pub fn ingest_estimates(path: &Path) -> Result<ExternalEstimate, MarkerlessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MarkerlessError::Io { path: path.display().to_string(), message: e.to_string() })?;
    ingest_estimates_str(&text, &path.display().to_string()).map_err(|e| match e {
        MarkerlessError::Schema { path: p, message } => {
            MarkerlessError::Schema { path: format!("{}:{p}", path.display()), message }
        }
        other => other,
    })
}

/// Serializes in the estimate file schema.
pub fn export_estimate(est: &ExternalEstimate) -> String {
    let frames: Vec<Vec<[f64; 3]>> = est.frames.iter().map(|r| r.iter().map(|p| [p.x, p.y, p.z]).collect()).collect();
    serde_json::json!({
        "convention": est.convention,
        "fps": est.fps,
        "source": est.source_label,
        "frames": frames,
    })
    .to_string()
}

/// Where a target joint comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointSource {
    Direct(usize),
    Average(usize, usize),
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMap {
    pub convention: Convention,
    /// One entry per target joint.
    pub sources: Vec<JointSource>,
}

impl JointMap {
    /// Built-in correspondence for a convention.
    ///
    /// Human3.6M order: pelvis, r_hip, r_knee, r_ankle, l_hip, l_knee, l_ankle,
    /// spine, thorax, nose, head, l_shoulder, l_elbow, l_wrist, r_shoulder,
    /// r_elbow, r_wrist. Its spine joint sits mid-back and maps to spine2, the
    /// thorax (neck base) to neck. BlazePose landmarks: pelvis and neck are the
    /// hip and shoulder midpoints, the head is the ear midpoint, hands the
    /// pinky/index midpoint and feet the foot-index landmark. Spine joints and
    /// collars have no counterpart in either and are absent.
    pub fn builtin(convention: Convention) -> Self {
        use JointSource::*;
        let mut s = vec![Absent; JOINT_COUNT];
        match convention {
            Convention::Smpl24 => {
                for (j, e) in s.iter_mut().enumerate() {
                    *e = Direct(j);
                }
            }
            Convention::H36m17 => {
                for (t, src) in [
                    (PELVIS, 0),
                    (R_HIP, 1),
                    (R_KNEE, 2),
                    (R_ANKLE, 3),
                    (L_HIP, 4),
                    (L_KNEE, 5),
                    (L_ANKLE, 6),
                    (SPINE2, 7),
                    (NECK, 8),
                    (HEAD, 10),
                    (L_SHOULDER, 11),
                    (L_ELBOW, 12),
                    (L_WRIST, 13),
                    (R_SHOULDER, 14),
                    (R_ELBOW, 15),
                    (R_WRIST, 16),
                ] {
                    s[t] = Direct(src);
                }
            }
            Convention::Blaze33 => {
                s[PELVIS] = Average(23, 24);
                s[NECK] = Average(11, 12);
                s[HEAD] = Average(7, 8);
                s[L_HAND] = Average(17, 19);
                s[R_HAND] = Average(18, 20);
                for (t, src) in [
                    (L_SHOULDER, 11),
                    (R_SHOULDER, 12),
                    (L_ELBOW, 13),
                    (R_ELBOW, 14),
                    (L_WRIST, 15),
                    (R_WRIST, 16),
                    (L_HIP, 23),
                    (R_HIP, 24),
                    (L_KNEE, 25),
                    (R_KNEE, 26),
                    (L_ANKLE, 27),
                    (R_ANKLE, 28),
                    (L_FOOT, 31),
                    (R_FOOT, 32),
                ] {
                    s[t] = Direct(src);
                }
            }
        }
        Self { convention, sources: s }
    }

    pub fn present(&self) -> Vec<bool> {
        self.sources.iter().map(|s| *s != JointSource::Absent).collect()
    }

    /// Applies the map to one frame of source joints.
    pub fn apply(&self, row: &[Vec3]) -> Vec<Option<Vec3>> {
        self.sources
            .iter()
            .map(|s| match *s {
                JointSource::Direct(i) => Some(row[i]),
                JointSource::Average(i, k) => Some((row[i] + row[k]) * 0.5),
                JointSource::Absent => None,
            })
            .collect()
    }
}

/// Joint positions on the 24-joint skeleton after mapping and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedEstimate {
    pub source_label: String,
    pub scale: f64,
    pub absolute: Vec<JointPositionsFrame>,
    /// Each frame translated so the pelvis is at the origin.
    pub pelvis_aligned: Vec<JointPositionsFrame>,
}

/// Chains whose summed bone lengths measure standing height: each ankle up
/// through knee, hip, pelvis and spine to the head.
const HEIGHT_CHAINS: [[usize; 9]; 2] = [
    [L_ANKLE, L_KNEE, L_HIP, PELVIS, SPINE1, SPINE2, SPINE3, NECK, HEAD],
    [R_ANKLE, R_KNEE, R_HIP, PELVIS, SPINE1, SPINE2, SPINE3, NECK, HEAD],
];

fn chain_length(joints: &[Option<Vec3>]) -> Option<f64> {
    let mut total = 0.0;
    let mut links = 0;
    for chain in HEIGHT_CHAINS {
        let mut prev: Option<Vec3> = None;
        for &j in &chain {
            if let Some(p) = joints[j] {
                if let Some(q) = prev {
                    total += (p - q).norm();
                    links += 1;
                }
                prev = Some(p);
            }
        }
    }
    (links > 0).then_some(total)
}

/// Height of the subject in an estimate, in the rest-extent sense of
/// [`Skeleton::rest_height`]: the median per-frame ankle-to-head path length,
/// converted through the same path on the default skeleton.
pub fn estimate_height(frames: &[Vec<Option<Vec3>>]) -> Result<f64, MarkerlessError> {
    let reference = Skeleton::smpl();
    let mask: Vec<bool> = frames.first().map(|f| f.iter().map(Option::is_some).collect()).unwrap_or_default();
    let rest: Vec<Option<Vec3>> =
        reference.rest_positions().into_iter().zip(&mask).map(|(p, &m)| m.then_some(p)).collect();
    let ref_path = chain_length(&rest).ok_or(MarkerlessError::ZeroHeight)?;
    let mut lengths: Vec<f64> = frames.iter().filter_map(|f| chain_length(f)).collect();
    if lengths.is_empty() {
        return Err(MarkerlessError::ZeroHeight);
    }
    lengths.sort_by(f64::total_cmp);
    let mid = lengths.len() / 2;
    let median = if lengths.len() % 2 == 1 { lengths[mid] } else { 0.5 * (lengths[mid - 1] + lengths[mid]) };
    let h = median / ref_path * reference.rest_height();
    if !(h.is_finite() && h > 0.0) {
        return Err(MarkerlessError::ZeroHeight);
    }
    Ok(h)
}

/// Maps to 24 joints and scales each frame about its pelvis so the subject's
/// height equals `target_height`. The pelvis trajectory is kept as
/// estimated; frames without a pelvis scale about the origin.
pub fn normalize_estimate(
    est: &ExternalEstimate,
    map: &JointMap,
    target_height: f64,
) -> Result<NormalizedEstimate, MarkerlessError> {
    if map.convention != est.convention {
        return Err(MarkerlessError::MapMismatch { map: map.convention, estimate: est.convention });
    }
    if !(target_height.is_finite() && target_height > 0.0) {
        return Err(MarkerlessError::BadTargetHeight(target_height));
    }
    let mapped: Vec<Vec<Option<Vec3>>> = est.frames.iter().map(|r| map.apply(r)).collect();
    let scale = target_height / estimate_height(&mapped)?;
    let absolute: Vec<JointPositionsFrame> = mapped
        .iter()
        .map(|f| {
            let c = f[PELVIS].unwrap_or_else(Vec3::zeros);
            JointPositionsFrame::from_options(&f.iter().map(|p| p.map(|v| c + (v - c) * scale)).collect::<Vec<_>>())
        })
        .collect();
    let pelvis_aligned = absolute.iter().map(pelvis_align).collect();
    Ok(NormalizedEstimate { source_label: est.source_label.clone(), scale, absolute, pelvis_aligned })
}

/// Translates a frame so its pelvis sits at the origin; without a pelvis the
/// whole frame is masked.
pub fn pelvis_align(frame: &JointPositionsFrame) -> JointPositionsFrame {
    match frame.get(PELVIS) {
        Some(root) => JointPositionsFrame {
            positions: frame.positions.iter().map(|p| p - root).collect(),
            valid: frame.valid.clone(),
        },
        None => JointPositionsFrame { positions: frame.positions.clone(), valid: vec![false; frame.len()] },
    }
}

/// Error levels of the surrogate estimator per motion class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateProfile {
    /// Per-axis Gaussian σ in meters for each motion class.
    pub basic_err: f64,
    pub fast_err: f64,
    pub extreme_err: f64,
    /// Amplitude (m) of a slow per-joint sinusoidal drift.
    pub drift: f64,
    /// Drift frequency in Hz.
    pub drift_hz: f64,
}

impl Default for SurrogateProfile {
    fn default() -> Self {
        Self { basic_err: 0.03, fast_err: 0.045, extreme_err: 0.06, drift: 0.02, drift_hz: 0.2 }
    }
}

impl SurrogateProfile {
    pub fn zero() -> Self {
        Self { basic_err: 0.0, fast_err: 0.0, extreme_err: 0.0, drift: 0.0, drift_hz: 0.2 }
    }

    pub fn sigma(&self, class: MotionClass) -> f64 {
        match class {
            MotionClass::Basic => self.basic_err,
            MotionClass::Fast => self.fast_err,
            MotionClass::Extreme => self.extreme_err,
        }
    }

    pub fn validate(&self) -> Result<(), MarkerlessError> {
        for (name, value) in [
            ("basic_err", self.basic_err),
            ("fast_err", self.fast_err),
            ("extreme_err", self.extreme_err),
            ("drift", self.drift),
            ("drift_hz", self.drift_hz),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(MarkerlessError::BadProfile { name, value });
            }
        }
        Ok(())
    }
}

/// Ground-truth joints plus Gaussian noise and slow drift. This is a test
/// stand-in, not a model of any vision estimator; its output is labeled
/// [`SURROGATE_SOURCE`].
pub fn surrogate_estimator(
    gt: &MotionSequence,
    profile: &SurrogateProfile,
    seed: u64,
) -> Result<ExternalEstimate, MarkerlessError> {
    profile.validate()?;
    let sigma = profile.sigma(gt.motion_class);
    let mut rng = crate::rng::seeded(seed);
    let n = gt.skeleton.len();
    let phases: Vec<[f64; 3]> = (0..n).map(|_| [rng.random::<f64>() * TAU, rng.random::<f64>() * TAU, rng.random::<f64>() * TAU]).collect();
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("positive sigma"));
    let frames = gt
        .joint_positions()
        .into_iter()
        .enumerate()
        .map(|(f, row)| {
            let t = f as f64 / gt.fps;
            row.iter()
                .zip(&phases)
                .map(|(p, ph)| {
                    let mut q = *p;
                    for k in 0..3 {
                        if profile.drift > 0.0 {
                            q[k] += profile.drift * (TAU * profile.drift_hz * t + ph[k]).sin();
                        }
                        if let Some(nd) = &normal {
                            q[k] += nd.sample(&mut rng);
                        }
                    }
                    q
                })
                .collect()
        })
        .collect();
    Ok(ExternalEstimate { convention: Convention::Smpl24, fps: gt.fps, frames, source_label: SURROGATE_SOURCE.into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_cover_every_target_joint() {
        for c in Convention::ALL {
            let m = JointMap::builtin(c);
            assert_eq!(m.sources.len(), JOINT_COUNT);
            for s in &m.sources {
                match *s {
                    JointSource::Direct(i) => assert!(i < c.joint_count()),
                    JointSource::Average(i, k) => assert!(i < c.joint_count() && k < c.joint_count()),
                    JointSource::Absent => {}
                }
            }
        }
        assert_eq!(JointMap::builtin(Convention::H36m17).present().iter().filter(|p| **p).count(), 16);
        assert_eq!(JointMap::builtin(Convention::Blaze33).present().iter().filter(|p| **p).count(), 19);
    }

    #[test]
    fn schema_errors_carry_paths() {
        let bad = r#"{"convention":"h36m17","fps":30,"frames":[[[0,0,0]]]}"#;
        match ingest_estimates_str(bad, "x") {
            Err(MarkerlessError::Schema { path, .. }) => assert_eq!(path, "$.frames[0]"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"convention":"smpl24","fps":0,"frames":[]}"#;
        assert!(matches!(ingest_estimates_str(bad, "x"), Err(MarkerlessError::Schema { path, .. }) if path == "$.fps"));
        let bad = r#"{"convention":"openpose","fps":30,"frames":[]}"#;
        assert!(ingest_estimates_str(bad, "x").is_err());
        let bad = r#"{"convention":"smpl24","fps":30,"frames":[],"extra":1}"#;
        assert!(matches!(ingest_estimates_str(bad, "x"), Err(MarkerlessError::Schema { path, .. }) if path == "$.extra"));
    }

    #[test]
    fn default_skeleton_height_is_recovered() {
        let s = Skeleton::smpl();
        let rest: Vec<Option<Vec3>> = s.rest_positions().into_iter().map(Some).collect();
        let h = estimate_height(&[rest]).unwrap();
        assert!((h - s.rest_height()).abs() < 1e-12);
    }

    #[test]
    fn bad_profile_rejected() {
        let p = SurrogateProfile { basic_err: -1.0, ..SurrogateProfile::default() };
        assert!(p.validate().is_err());
    }
}
