//! Seeded procedural motion on the default skeleton.
//!
//! `basic` is a walk cycle, `fast` a run-like cycle on the same joints, and
//! `extreme` a slow excursion into deep hip, knee and spine flexion (one
//! `sin²` bump over the clip, peaking at mid-clip).
//!
//! Sign conventions follow the world axes: flexing a hip swings the thigh
//! toward +z, flexing a knee swings the shank toward -z.

use std::f64::consts::{PI, TAU};

use rand::Rng;

use super::{smpl, KinematicsError, MotionClass, MotionSequence, Pose, Skeleton};
use crate::{rng, Quat, Vec3};

fn rx(deg: f64) -> Quat {
    Quat::from_axis_angle(&Vec3::x_axis(), deg.to_radians())
}

fn ry(deg: f64) -> Quat {
    Quat::from_axis_angle(&Vec3::y_axis(), deg.to_radians())
}

fn rz(deg: f64) -> Quat {
    Quat::from_axis_angle(&Vec3::z_axis(), deg.to_radians())
}

struct Cycle {
    freq: f64,
    hip: f64,
    knee: f64,
    shoulder_lower: f64,
    shoulder_swing: f64,
    elbow: f64,
    yaw: f64,
    speed: f64,
    bob: f64,
    phase: f64,
}

impl Cycle {
    fn draw(class: MotionClass, r: &mut impl Rng) -> Self {
        let (freq, hip, knee, swing, elbow, speed) = match class {
            MotionClass::Fast => (
                r.random_range(2.0..4.0),
                r.random_range(40.0..70.0),
                r.random_range(60.0..90.0),
                r.random_range(45.0..80.0),
                r.random_range(50.0..80.0),
                r.random_range(2.0..3.0),
            ),
            _ => (
                r.random_range(0.8..1.0),
                r.random_range(25.0..35.0),
                r.random_range(35.0..45.0),
                r.random_range(15.0..30.0),
                r.random_range(10.0..25.0),
                r.random_range(0.9..1.2),
            ),
        };
        Self {
            freq,
            hip,
            knee,
            shoulder_lower: r.random_range(35.0..45.0),
            shoulder_swing: swing,
            elbow,
            yaw: r.random_range(3.0..8.0),
            speed,
            bob: r.random_range(0.01..0.03),
            phase: r.random_range(0.0..TAU),
        }
    }

    fn pose(&self, rest: &Pose, t: f64) -> Pose {
        let w = TAU * self.freq * t + self.phase;
        let mut p = rest.clone();
        let q = &mut p.local_rotations;
        let s = w.sin();
        // Left leg leads with sin, right leg lags by half a cycle.
        q[smpl::L_HIP] = rx(-self.hip * s);
        q[smpl::R_HIP] = rx(self.hip * s);
        q[smpl::L_KNEE] = rx(self.knee * (1.0 - (w + 0.5 * PI).cos()) / 2.0);
        q[smpl::R_KNEE] = rx(self.knee * (1.0 - (w + 1.5 * PI).cos()) / 2.0);
        q[smpl::PELVIS] = ry(self.yaw * s);
        q[smpl::SPINE2] = ry(-self.yaw * s);
        // Arms swing against the opposite leg.
        q[smpl::L_SHOULDER] = rx(self.shoulder_swing * s) * rz(-self.shoulder_lower);
        q[smpl::R_SHOULDER] = rx(-self.shoulder_swing * s) * rz(self.shoulder_lower);
        q[smpl::L_ELBOW] = ry(-self.elbow * (1.0 + s) / 2.0);
        q[smpl::R_ELBOW] = ry(self.elbow * (1.0 - s) / 2.0);
        p.root_translation +=
            Vec3::new(0.0, self.bob * (2.0 * w).cos(), self.speed * t);
        p
    }
}

struct Excursion {
    hip: f64,
    knee: f64,
    spine: f64,
    arm_raise: f64,
    elbow: f64,
    jitter: [f64; 4],
}

impl Excursion {
    fn draw(r: &mut impl Rng) -> Self {
        Self {
            hip: r.random_range(100.0..115.0),
            knee: r.random_range(130.0..145.0),
            spine: r.random_range(30.0..45.0),
            arm_raise: r.random_range(60.0..85.0),
            elbow: r.random_range(60.0..100.0),
            jitter: [
                r.random_range(-5.0..5.0),
                r.random_range(-5.0..5.0),
                r.random_range(-5.0..5.0),
                r.random_range(-5.0..5.0),
            ],
        }
    }

    fn pose(&self, rest: &Pose, u: f64) -> Pose {
        let a = (PI * u).sin().powi(2);
        let [j0, j1, j2, j3] = self.jitter;
        let mut p = rest.clone();
        let q = &mut p.local_rotations;
        q[smpl::L_HIP] = rx(-(self.hip + j0) * a);
        q[smpl::R_HIP] = rx(-(self.hip - j0) * a);
        q[smpl::L_KNEE] = rx((self.knee + j1) * a);
        q[smpl::R_KNEE] = rx((self.knee - j1) * a);
        q[smpl::SPINE1] = rx(0.5 * self.spine * a);
        q[smpl::SPINE2] = rx(0.5 * self.spine * a);
        q[smpl::L_SHOULDER] = rz((self.arm_raise + j2) * a);
        q[smpl::R_SHOULDER] = rz(-(self.arm_raise - j2) * a);
        q[smpl::L_ELBOW] = ry(-(self.elbow + j3) * a);
        q[smpl::R_ELBOW] = ry((self.elbow - j3) * a);
        p
    }
}

/// Deterministic clip of `duration` seconds sampled at `fps` on [`Skeleton::smpl`].
pub fn procedural_motion(
    class: MotionClass,
    duration: f64,
    fps: f64,
    seed: u64,
) -> Result<MotionSequence, KinematicsError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(KinematicsError::BadFps(fps));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(KinematicsError::BadDuration(duration));
    }
    let skeleton = Skeleton::smpl();
    let rest = Pose::rest(&skeleton);
    let n = ((duration * fps).round() as usize).max(1);
    let mut r = rng::seeded(seed);
    let frames: Vec<Pose> = match class {
        MotionClass::Basic | MotionClass::Fast => {
            let cycle = Cycle::draw(class, &mut r);
            (0..n).map(|i| cycle.pose(&rest, i as f64 / fps)).collect()
        }
        MotionClass::Extreme => {
            let ex = Excursion::draw(&mut r);
            let span = (n.max(2) - 1) as f64;
            (0..n).map(|i| ex.pose(&rest, i as f64 / span)).collect()
        }
    };
    MotionSequence::new(skeleton, fps, frames, class)
}

/// Largest parent-relative angular speed (rad/s) of any joint between consecutive frames.
pub fn max_angular_speed(seq: &MotionSequence) -> f64 {
    seq.frames
        .windows(2)
        .flat_map(|w| {
            w[0].local_rotations
                .iter()
                .zip(&w[1].local_rotations)
                .map(|(a, b)| a.angle_to(b) * seq.fps)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let a = procedural_motion(MotionClass::Basic, 2.0, 30.0, 7).unwrap();
        let b = procedural_motion(MotionClass::Basic, 2.0, 30.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
    }

    #[test]
    fn fast_is_faster_than_basic() {
        for seed in 0..10 {
            let basic = procedural_motion(MotionClass::Basic, 2.0, 30.0, seed).unwrap();
            let fast = procedural_motion(MotionClass::Fast, 2.0, 30.0, seed).unwrap();
            assert!(max_angular_speed(&fast) > max_angular_speed(&basic));
        }
    }

    #[test]
    fn extreme_exceeds_120_degree_knee_flexion() {
        for seed in 0..10 {
            let seq = procedural_motion(MotionClass::Extreme, 3.0, 30.0, seed).unwrap();
            let peak = seq
                .frames
                .iter()
                .map(|f| f.local_rotations[smpl::L_KNEE].angle().to_degrees())
                .fold(0.0, f64::max);
            assert!(peak > 120.0, "seed {seed}: {peak}");
        }
    }

    #[test]
    fn basic_swings_stay_within_45_degrees() {
        let seq = procedural_motion(MotionClass::Basic, 4.0, 30.0, 3).unwrap();
        for f in &seq.frames {
            for j in [smpl::L_HIP, smpl::R_HIP, smpl::L_KNEE, smpl::R_KNEE] {
                assert!(f.local_rotations[j].angle().to_degrees() <= 45.0 + 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_duration() {
        assert_eq!(
            procedural_motion(MotionClass::Basic, 0.0, 30.0, 1),
            Err(KinematicsError::BadDuration(0.0))
        );
    }
}
