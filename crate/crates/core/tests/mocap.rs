use std::sync::OnceLock;

use garment_mocap::garment::{generate_garment, GarmentCategory, GarmentSpec};
use garment_mocap::kinematics::smpl::*;
use garment_mocap::kinematics::*;
use garment_mocap::markerless::*;
use garment_mocap::mesh::{build_parametric_body, skin_lbs, BuildLabel, SkinnedBody, TriMesh};
use garment_mocap::metrics::*;
use garment_mocap::mocap_marker::*;
use garment_mocap::{Quat, Vec3};
use nalgebra::Unit;

fn body() -> &'static SkinnedBody {
    static B: OnceLock<SkinnedBody> = OnceLock::new();
    B.get_or_init(|| build_parametric_body(BuildLabel::FemaleMedium, &Skeleton::smpl()).unwrap())
}

fn frames(seq: &MotionSequence) -> Vec<JointPositionsFrame> {
    seq.joint_positions().into_iter().map(JointPositionsFrame::all_valid).collect()
}

fn skin_trajectory(seq: &MotionSequence) -> MarkerTrajectory {
    let b = body();
    let skin: Vec<TriMesh> = seq.global_transforms().iter().map(|t| skin_lbs(b, t).unwrap()).collect();
    track_markers(&place_markers(b, None).unwrap(), &skin, None, &[], seq.fps).unwrap()
}

#[test]
fn skin_markers_close_the_loop() {
    let b = body();
    let seq = procedural_motion(MotionClass::Fast, 1.0, 30.0, 2).unwrap().retarget(&b.skeleton).unwrap();
    let est = reconstruct_pose_from_markers(&skin_trajectory(&seq), &b.skeleton, seq.motion_class).unwrap();
    let (gt, ep) = (frames(&seq), frames(&est));
    assert!(mpjpe(&gt, &ep).unwrap() < 1e-6);
    let c = crmse(&angles_from_positions(&b.skeleton, &gt).unwrap(), &angles_from_positions(&b.skeleton, &ep).unwrap())
        .unwrap();
    assert!(c.degrees < 0.01, "{c:?}");
}

#[test]
fn unicloth_covers_every_marker_and_tshirt_leaves_extremities() {
    let b = body();
    let uni = generate_garment(b, &GarmentSpec::new(GarmentCategory::Unicloth, 3, b.build_label).unwrap()).unwrap();
    let specs = place_markers(b, Some(&uni.mesh)).unwrap();
    assert_eq!(specs.len(), 48);
    assert!(specs.iter().all(|s| s.target == MarkerTarget::Cloth));

    let shirt = generate_garment(b, &GarmentSpec::new(GarmentCategory::Tshirt, 3, b.build_label).unwrap()).unwrap();
    let specs = place_markers(b, Some(&shirt.mesh)).unwrap();
    let on_cloth = cloth_joints(&specs, 24);
    for j in [L_WRIST, R_WRIST, L_ANKLE, R_ANKLE, HEAD, L_KNEE] {
        assert!(!on_cloth[j], "{}", JOINT_NAMES[j]);
    }
    for j in [SPINE1, SPINE2, SPINE3] {
        assert!(on_cloth[j], "{}", JOINT_NAMES[j]);
    }
}

#[test]
fn marker_noise_rms_matches_request() {
    let traj = MarkerTrajectory { fps: 30.0, noise_seed: None, frames: vec![vec![Vec3::zeros(); 48]; 2084] };
    let noisy = add_marker_noise(&traj, 0.005, 17).unwrap();
    let d: Vec<f64> = noisy.frames.iter().flatten().map(|p| p.norm_squared()).collect();
    assert!(d.len() >= 100_000);
    let rms = (d.iter().sum::<f64>() / d.len() as f64).sqrt();
    assert!((rms / 0.005 - 1.0).abs() < 0.02, "rms {rms}");
    assert_eq!(noisy.noise_seed, Some(17));
    assert!(add_marker_noise(&traj, -1.0, 1).is_err());
}

#[test]
fn skin_marker_ids_follow_pair_order() {
    let specs = place_markers(body(), None).unwrap();
    for (i, s) in specs.iter().enumerate() {
        assert_eq!(s.id(), i);
        assert_eq!(s.target, MarkerTarget::Skin);
    }
}

#[test]
fn surrogate_noise_level_and_label() {
    let seq = procedural_motion(MotionClass::Basic, 10.0, 30.0, 3).unwrap();
    let profile = SurrogateProfile { basic_err: 0.05, drift: 0.0, ..SurrogateProfile::default() };
    let est = surrogate_estimator(&seq, &profile, 8).unwrap();
    assert_eq!(est.source_label, SURROGATE_SOURCE);
    let gt = seq.joint_positions();
    let mut ss = 0.0;
    let mut n = 0;
    for (a, b) in gt.iter().zip(&est.frames) {
        for (p, q) in a.iter().zip(b) {
            for k in 0..3 {
                ss += (p[k] - q[k]).powi(2);
                n += 1;
            }
        }
    }
    let sigma = (ss / n as f64).sqrt();
    assert!((sigma / 0.05 - 1.0).abs() < 0.05, "sigma {sigma}");
    let again = surrogate_estimator(&seq, &profile, 8).unwrap();
    assert_eq!(again, est);
}

#[test]
fn noiseless_surrogate_normalizes_to_ground_truth() {
    let seq = procedural_motion(MotionClass::Extreme, 1.0, 30.0, 6).unwrap();
    let est = surrogate_estimator(&seq, &SurrogateProfile::zero(), 1).unwrap();
    let norm = normalize_estimate(&est, &JointMap::builtin(Convention::Smpl24), seq.skeleton.rest_height()).unwrap();
    assert!((norm.scale - 1.0).abs() < 1e-9, "{}", norm.scale);
    assert!(mpjpe(&frames(&seq), &norm.absolute).unwrap() < 1e-9);
    let aligned: Vec<_> = frames(&seq).iter().map(pelvis_align).collect();
    assert!(mpjpe(&aligned, &norm.pelvis_aligned).unwrap() < 1e-9);
}

#[test]
fn estimate_json_round_trips() {
    let seq = procedural_motion(MotionClass::Fast, 1.0, 30.0, 1).unwrap();
    let est = surrogate_estimator(&seq, &SurrogateProfile::default(), 5).unwrap();
    let back = ingest_estimates_str(&export_estimate(&est), "x").unwrap();
    assert_eq!(back.convention, est.convention);
    assert_eq!(back.source_label, SURROGATE_SOURCE);
    for (a, b) in est.frames.iter().flatten().zip(back.frames.iter().flatten()) {
        assert!((a - b).norm() < 1e-6);
    }
}

/// Builds an H3.6M-ordered estimate from 24-joint positions.
fn to_h36m(row: &[Vec3]) -> Vec<Vec3> {
    let nose = row[HEAD] + Vec3::new(0.0, -0.05, 0.08);
    vec![
        row[PELVIS], row[R_HIP], row[R_KNEE], row[R_ANKLE], row[L_HIP], row[L_KNEE], row[L_ANKLE], row[SPINE2],
        row[NECK], nose, row[HEAD], row[L_SHOULDER], row[L_ELBOW], row[L_WRIST], row[R_SHOULDER], row[R_ELBOW],
        row[R_WRIST],
    ]
}

#[test]
fn h36m_estimates_mask_missing_joints() {
    let seq = procedural_motion(MotionClass::Basic, 0.5, 30.0, 2).unwrap();
    let rows: Vec<Vec<Vec3>> = seq.joint_positions().iter().map(|r| to_h36m(r)).collect();
    let est = ExternalEstimate { convention: Convention::H36m17, fps: 30.0, frames: rows, source_label: "h".into() };
    let map = JointMap::builtin(Convention::H36m17);
    let present = map.present();
    assert_eq!(present.iter().filter(|p| **p).count(), 16);
    for j in [SPINE1, SPINE3, L_COLLAR, R_COLLAR, L_FOOT, R_FOOT, L_HAND, R_HAND] {
        assert!(!present[j], "{}", JOINT_NAMES[j]);
    }
    let norm = normalize_estimate(&est, &map, seq.skeleton.rest_height()).unwrap();
    assert!(!norm.absolute[0].valid[SPINE1]);
    // Chains through spine3 are missing a link, so the scale is only close to 1.
    let m = mpjpe_over(&frames(&seq), &norm.absolute, Some(&present)).unwrap();
    assert!(m < 0.05, "{m}");
    assert!(normalize_estimate(&est, &JointMap::builtin(Convention::Smpl24), 1.7).is_err());
}

#[test]
fn twist_is_invisible_to_position_angles() {
    let s = Skeleton::smpl();
    let mut pose = Pose::rest(&s);
    let forearm = Unit::new_normalize(s.rest_offset(L_WRIST));
    pose.local_rotations[L_ELBOW] = Quat::from_axis_angle(&forearm, 1.0);
    pose.local_rotations[L_KNEE] = Quat::from_axis_angle(&Vec3::x_axis(), 0.5);
    let p = JointPositionsFrame::all_valid(joint_positions(&s, &pose).unwrap());
    let a = &angles_from_positions(&s, &[p]).unwrap()[0];
    assert!(a.angles[L_ELBOW].abs() < 1e-9);
    assert!((a.angles[L_KNEE] - 0.5).abs() < 1e-9);
    assert!(!a.valid[L_HAND] && !a.valid[HEAD]);
}

#[test]
fn rescaling_keeps_the_pelvis_trajectory() {
    let seq = procedural_motion(MotionClass::Basic, 1.0, 30.0, 6).unwrap();
    let big = rescale_to_height(&seq, 2.0 * seq.skeleton.rest_height()).unwrap();
    let est = surrogate_estimator(&big, &SurrogateProfile::zero(), 1).unwrap();
    let norm = normalize_estimate(&est, &JointMap::builtin(Convention::Smpl24), seq.skeleton.rest_height()).unwrap();
    assert!((norm.scale - 0.5).abs() < 1e-9);
    for (n, e) in norm.absolute.iter().zip(&est.frames) {
        assert!((n.positions[PELVIS] - e[PELVIS]).norm() < 1e-12);
    }
    let aligned: Vec<_> = frames(&seq).iter().map(pelvis_align).collect();
    assert!(mpjpe(&aligned, &norm.pelvis_aligned).unwrap() < 1e-9);
}
