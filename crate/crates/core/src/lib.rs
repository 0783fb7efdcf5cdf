//! Numeric core for multi-camera 3D human pose reconstruction.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (an allocator is required). File formats, the
//! synthetic scene generator, the staged pipeline and the command line tool
//! live in the `mvpose` crate.
//!
//! Stage overview, in dataflow order:
//!
//! * [`tracker`]: single-subject selection among detection boxes (IoU gate,
//!   color-histogram fallback).
//! * [`heatmap`]: spatial softmax and soft-argmax keypoint decoding.
//! * [`triangulation`]: weighted DLT triangulation solved with SVD.
//! * [`refiner`]: causal sliding-window temporal refinement network that
//!   also predicts an intermediate frame.
//! * [`camera`]: pinhole projection, Rodrigues rotations, engine-frame export.
//! * [`ik`]: FABRIK chain solver and multi-chain rig driver.
//! * [`muscle`]: joint-velocity based muscle intensity levels.
//! * [`metrics`]: MPJPE, Procrustes-aligned MPJPE and acceleration error.

#![no_std]

extern crate alloc;

pub mod camera;
mod error;
pub mod heatmap;
pub mod ik;
pub(crate) mod math;
pub mod metrics;
pub mod muscle;
pub mod refiner;
pub mod skeleton;
pub mod tracker;
pub mod triangulation;

pub use error::{Error, Result};
pub use skeleton::{Pose2D, Pose3D, Skeleton, NUM_JOINTS};

/// 3-vector in meters unless stated otherwise.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 2-vector in pixels unless stated otherwise.
pub type Vec2 = nalgebra::Vector2<f64>;
