//! Simulation engine for measuring how loose garments degrade optical
//! motion capture.
//!
//! A benchmark cell dresses a parametric body in a procedurally generated
//! garment of a chosen drape class, plays a known motion, simulates the cloth,
//! and scores marker-based reconstructions and ingested marker-less estimates
//! against the anatomic joints of the body.
//!
//! Coordinates are meters, right-handed, y-up. The subject faces +z and its
//! left side points toward +x.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cloth;
pub mod garment;
pub mod kinematics;
pub mod markerless;
pub mod mesh;
pub mod metrics;
pub mod mocap_marker;
pub mod rng;

pub use nalgebra;

/// 3-vector in meters (or m/s for velocities).
pub type Vec3 = nalgebra::Vector3<f64>;
/// Unit quaternion used for all joint rotations.
pub type Quat = nalgebra::UnitQuaternion<f64>;

/// Version string stamped into every report.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
