//! Synthetic scenes with exact ground truth: camera rigs, articulated
//! motion, 2D observations, heatmaps and detection-box scenarios.

mod detections;
mod motion;
mod observe;
mod training;
mod write;

pub use detections::{subject_box, synth_detections, DetectionFrame, Scenario, DISTRACTOR, SUBJECT};
pub use motion::{max_joint_speed, synth_motion, MotionConfig, MotionKind, MAX_JOINT_SPEED};
pub use observe::{observe, render_heatmap, CameraObservations, HeatmapFrame, HeatmapSynth, NoiseConfig};
pub use training::{add_joint_noise, refiner_trajectories};
pub use write::{write_scene, SceneFiles};

use std::f64::consts::TAU;

use mvpose_core::camera::CameraView;
use mvpose_core::{Pose3D, Skeleton, Vec3};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Frames whose joints all project inside every image must reach this share.
pub const MIN_IN_BOUNDS: f64 = 0.95;
const REGENERATE_ATTEMPTS: u64 = 8;

/// `n` cameras evenly spaced on a horizontal circle of `radius` at
/// `height`, all looking at the world origin with image rows pointing down.
pub fn make_rig(n: usize, radius: f64, height: f64, focal: f64, image: (u32, u32)) -> Result<Vec<CameraView>> {
    if n < 2 {
        return Err(Error::Rig(format!("need at least 2 cameras, got {n}")));
    }
    if !(radius > 0.0 && radius.is_finite() && height.is_finite()) {
        return Err(Error::Rig(format!("invalid radius {radius} or height {height}")));
    }
    if !(focal > 0.0 && focal.is_finite()) || image.0 == 0 || image.1 == 0 {
        return Err(Error::Rig(format!("invalid focal {focal} or image size {image:?}")));
    }
    let k = Matrix3::new(focal, 0.0, image.0 as f64 / 2.0, 0.0, focal, image.1 as f64 / 2.0, 0.0, 0.0, 1.0);
    (0..n)
        .map(|i| {
            let th = TAU * i as f64 / n as f64;
            let center = Vec3::new(radius * th.cos(), radius * th.sin(), height);
            let forward = (-center).normalize();
            let right = forward.cross(&Vec3::z()).normalize();
            let down = forward.cross(&right);
            let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
            Ok(CameraView::new(format!("cam{i}"), k, r, -(r * center), image.0, image.1)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub cameras: usize,
    pub radius: f64,
    pub height: f64,
    pub focal: f64,
    pub width: u32,
    pub image_height: u32,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self { cameras: 4, radius: 3.0, height: 0.5, focal: 1000.0, width: 1000, image_height: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub rig: RigConfig,
    pub motion: MotionConfig,
    pub noise: NoiseConfig,
    pub scenario: Scenario,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rig: RigConfig::default(),
            motion: MotionConfig::default(),
            noise: NoiseConfig::default(),
            scenario: Scenario::Single,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub cameras: Vec<CameraView>,
    pub gt: Vec<Pose3D>,
    pub fps: f64,
    pub noise: NoiseConfig,
    pub scenario: Scenario,
    pub seed: u64,
    /// Seed the motion was finally generated with (after regeneration).
    pub motion_seed: u64,
}

impl SynthScene {
    /// Builds the rig and motion. If fewer than 95% of frames project fully
    /// inside every image, the motion is regenerated with the next seed.
    pub fn generate(cfg: &SceneConfig) -> Result<Self> {
        let r = &cfg.rig;
        let cameras = make_rig(r.cameras, r.radius, r.height, r.focal, (r.width, r.image_height))?;
        cfg.noise.validate(&cameras)?;
        let skel = Skeleton::h36m();
        for attempt in 0..REGENERATE_ATTEMPTS {
            let motion_seed = cfg.seed.wrapping_add(attempt);
            let gt = synth_motion(&skel, &cfg.motion, motion_seed)?;
            let share = in_bounds_share(&cameras, &gt);
            if share >= MIN_IN_BOUNDS {
                return Ok(Self {
                    cameras,
                    gt,
                    fps: cfg.motion.fps,
                    noise: cfg.noise.clone(),
                    scenario: cfg.scenario,
                    seed: cfg.seed,
                    motion_seed,
                });
            }
            log::info!("motion seed {motion_seed}: only {:.1}% of frames in view, regenerating", 100.0 * share);
        }
        Err(Error::Config(format!(
            "subject leaves the camera views; no valid motion in {REGENERATE_ATTEMPTS} attempts"
        )))
    }
}

/// Share of frames whose joints are in front of and inside every camera.
pub fn in_bounds_share(cameras: &[CameraView], gt: &[Pose3D]) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let ok = gt
        .iter()
        .filter(|p| {
            cameras.iter().all(|c| p.joints.iter().all(|j| c.project(j).map(|px| c.contains(&px)).unwrap_or(false)))
        })
        .count();
    ok as f64 / gt.len() as f64
}
