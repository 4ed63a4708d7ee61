//! Virtual optical markers: placement on skin or garment, tracking through a
//! simulated sequence, Gaussian noise and pose reconstruction.
//!
//! Every joint carries a pair of markers on opposite sides of it; marker id is
//! `2·joint + slot`. A joint's estimate is the midpoint of its pair.

use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloth::ClothState;
use crate::kinematics::{fit_pose, KinematicsError, MotionClass, MotionSequence, Pose, Skeleton};
use crate::mesh::{surface_point_position, MeshError, SkinnedBody, SurfacePoint, TriMesh};
use crate::{Quat, Vec3};

/// Default RMS of the 3D noise displacement, meters.
pub const DEFAULT_NOISE_RMS: f64 = 0.005;

#[derive(Debug, Error, PartialEq)]
pub enum MarkerError {
    #[error("body has {0} marker sites; expected two per joint")]
    MissingSites(usize),
    #[error("marker ray from joint {joint} slot {slot} hit neither skin nor garment")]
    RayMissed { joint: usize, slot: usize },
    #[error("{what} has {found} frames, expected {expected}")]
    FrameMismatch { what: &'static str, expected: usize, found: usize },
    #[error("trajectory has {found} markers, expected {expected}")]
    MarkerCount { expected: usize, found: usize },
    #[error("cloth markers present but no garment mesh supplied")]
    NoGarment,
    #[error("frame {frame} marker {marker} is not finite")]
    NonFinite { frame: usize, marker: usize },
    #[error("noise rms must be finite and non-negative, got {0}")]
    BadNoise(f64),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("kinematics: {0}")]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairSlot {
    A,
    B,
}

impl PairSlot {
    pub fn index(self) -> usize {
        match self {
            PairSlot::A => 0,
            PairSlot::B => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerTarget {
    Skin,
    Cloth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub joint: usize,
    pub slot: PairSlot,
    pub target: MarkerTarget,
    /// On the body template for skin markers, on the garment mesh for cloth.
    pub attachment: SurfacePoint,
}

impl MarkerSpec {
    pub fn id(&self) -> usize {
        2 * self.joint + self.slot.index()
    }
}

/// Per-frame marker positions, indexed by marker id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerTrajectory {
    pub fps: f64,
    pub noise_seed: Option<u64>,
    pub frames: Vec<Vec<Vec3>>,
}

impl MarkerTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Places two markers per joint.
///
/// Each marker's nominal point is its skin site, which sits off the joint
/// along ± the joint's lateral axis. The ray from the joint through that site
/// is cast against the rest-pose garment; the nearest hit makes it a cloth
/// marker there, otherwise it stays on the skin site.
pub fn place_markers(body: &SkinnedBody, garment: Option<&TriMesh>) -> Result<Vec<MarkerSpec>, MarkerError> {
    let n = body.skeleton.len();
    if body.marker_sites.len() != 2 * n {
        return Err(MarkerError::MissingSites(body.marker_sites.len()));
    }
    let rest = body.skeleton.rest_positions();
    let mut specs = Vec::with_capacity(2 * n);
    for joint in 0..n {
        for slot in [PairSlot::A, PairSlot::B] {
            let site = body
                .marker_sites
                .iter()
                .find(|s| s.joint == joint && s.slot == slot.index())
                .ok_or(MarkerError::MissingSites(body.marker_sites.len()))?;
            let hit = garment.and_then(|g| g.raycast(&rest[joint], &site.lateral));
            specs.push(match hit {
                Some(h) => MarkerSpec { joint, slot, target: MarkerTarget::Cloth, attachment: h.point },
                None => MarkerSpec { joint, slot, target: MarkerTarget::Skin, attachment: site.point },
            });
        }
    }
    Ok(specs)
}

/// Joints with at least one cloth-attached marker.
pub fn cloth_joints(specs: &[MarkerSpec], joints: usize) -> Vec<bool> {
    let mut out = vec![false; joints];
    for s in specs.iter().filter(|s| s.target == MarkerTarget::Cloth) {
        out[s.joint] = true;
    }
    out
}

/// Reads every marker off its target surface, frame by frame.
///
/// `skin` holds the skinned body per frame. `garment` is the cloth topology
/// and `cloth` its simulated states; both may be absent when no marker is on
/// cloth.
pub fn track_markers(
    specs: &[MarkerSpec],
    skin: &[TriMesh],
    garment: Option<&TriMesh>,
    cloth: &[ClothState],
    fps: f64,
) -> Result<MarkerTrajectory, MarkerError> {
    let any_cloth = specs.iter().any(|s| s.target == MarkerTarget::Cloth);
    if any_cloth {
        if garment.is_none() {
            return Err(MarkerError::NoGarment);
        }
        if cloth.len() != skin.len() {
            return Err(MarkerError::FrameMismatch { what: "cloth", expected: skin.len(), found: cloth.len() });
        }
    }
    let count = specs.iter().map(|s| s.id() + 1).max().unwrap_or(0);
    let mut frames = Vec::with_capacity(skin.len());
    for (f, body) in skin.iter().enumerate() {
        let cloth_mesh = match (any_cloth, garment) {
            (true, Some(g)) => Some(g.with_positions(cloth[f].positions.clone())?),
            _ => None,
        };
        let mut row = vec![Vec3::zeros(); count];
        for s in specs {
            row[s.id()] = match s.target {
                MarkerTarget::Skin => surface_point_position(body, &s.attachment)?,
                MarkerTarget::Cloth => surface_point_position(cloth_mesh.as_ref().expect("checked"), &s.attachment)?,
            };
        }
        frames.push(row);
    }
    Ok(MarkerTrajectory { fps, noise_seed: None, frames })
}

/// Adds i.i.d. Gaussian noise with per-axis σ = `rms/√3`, so the RMS 3D
/// displacement is `rms`. Zero `rms` returns the input unchanged.
pub fn add_marker_noise(traj: &MarkerTrajectory, rms: f64, seed: u64) -> Result<MarkerTrajectory, MarkerError> {
    if !(rms.is_finite() && rms >= 0.0) {
        return Err(MarkerError::BadNoise(rms));
    }
    if rms == 0.0 {
        return Ok(traj.clone());
    }
    let normal = Normal::new(0.0, rms / 3f64.sqrt()).expect("positive sigma");
    let mut rng = crate::rng::seeded(seed);
    let frames = traj
        .frames
        .iter()
        .map(|row| {
            row.iter()
                .map(|p| p + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
                .collect()
        })
        .collect();
    Ok(MarkerTrajectory { fps: traj.fps, noise_seed: Some(seed), frames })
}

/// Pair midpoints per frame.
pub fn marker_midpoints(traj: &MarkerTrajectory, joints: usize) -> Result<Vec<Vec<Vec3>>, MarkerError> {
    traj.frames
        .iter()
        .enumerate()
        .map(|(frame, row)| {
            if row.len() != 2 * joints {
                return Err(MarkerError::MarkerCount { expected: 2 * joints, found: row.len() });
            }
            if let Some(marker) = row.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(MarkerError::NonFinite { frame, marker });
            }
            Ok((0..joints).map(|j| (row[2 * j] + row[2 * j + 1]) * 0.5).collect())
        })
        .collect()
}

/// Recovers a motion from a marker trajectory.
///
/// The root follows its pair midpoint, and bones are aimed from the
/// re-projected parent toward each child's midpoint (see
/// [`fit_pose`]), so the estimate keeps the skeleton's bone lengths.
pub fn reconstruct_pose_from_markers(
    traj: &MarkerTrajectory,
    skeleton: &Skeleton,
    motion_class: MotionClass,
) -> Result<MotionSequence, MarkerError> {
    let mids = marker_midpoints(traj, skeleton.len())?;
    let frames = mids
        .iter()
        .map(|m| {
            let targets: Vec<Option<Vec3>> = m.iter().copied().map(Some).collect();
            let fit = fit_pose(skeleton, &targets, true)?;
            Ok(Pose {
                root_translation: m[0],
                local_rotations: fit.local_rotations.iter().map(|r| r.unwrap_or_else(Quat::identity)).collect(),
            })
        })
        .collect::<Result<Vec<_>, MarkerError>>()?;
    Ok(MotionSequence::new(skeleton.clone(), traj.fps, frames, motion_class)?)
}

/// CSV with one `frame,marker_id,x,y,z` row per marker per frame.
pub fn trajectory_to_csv(traj: &MarkerTrajectory) -> String {
    let mut out = String::from("frame,marker_id,x,y,z\n");
    for (f, row) in traj.frames.iter().enumerate() {
        for (id, p) in row.iter().enumerate() {
            let _ = writeln!(out, "{f},{id},{:.6},{:.6},{:.6}", p.x, p.y, p.z);
        }
    }
    out
}
