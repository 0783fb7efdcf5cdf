//! 2D observations of a synthetic scene.

use std::collections::BTreeMap;

use mvpose_core::camera::CameraView;
use mvpose_core::heatmap::{CropTransform, Heatmap};
use mvpose_core::tracker::BBox;
use mvpose_core::{Pose2D, Vec2, NUM_JOINTS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{subject_box, SynthScene};
use crate::{Error, Result};

const OBSERVE_STREAM: u64 = 0x6f62_7365_7276_6521;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapSynth {
    pub width: usize,
    pub height: usize,
    /// Bump standard deviation in heatmap cells.
    pub sigma: f64,
    /// Bump peak value before the spatial softmax.
    pub amplitude: f64,
}

impl Default for HeatmapSynth {
    fn default() -> Self {
        Self { width: 48, height: 64, sigma: 2.0, amplitude: 0.16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct NoiseConfig {
    /// Gaussian pixel noise standard deviation.
    pub pixel_sigma: f64,
    /// Probability that a joint is occluded in a view.
    pub occlusion: f64,
    /// Per-camera occlusion probability overriding `occlusion`.
    pub camera_occlusion: BTreeMap<String, f64>,
    /// Render heatmap streams when set.
    pub heatmaps: Option<HeatmapSynth>,
}

impl NoiseConfig {
    pub fn validate(&self, cameras: &[CameraView]) -> Result<()> {
        if !(self.pixel_sigma >= 0.0 && self.pixel_sigma.is_finite()) {
            return Err(Error::Config(format!("pixel sigma must be >= 0, got {}", self.pixel_sigma)));
        }
        for (name, p) in
            std::iter::once(("*", &self.occlusion)).chain(self.camera_occlusion.iter().map(|(k, v)| (k.as_str(), v)))
        {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!("occlusion probability {p} for {name} outside [0, 1]")));
            }
        }
        if let Some(id) = self.camera_occlusion.keys().find(|id| !cameras.iter().any(|c| &c.id == *id)) {
            return Err(Error::Config(format!("occlusion override for unknown camera {id}")));
        }
        if let Some(h) = &self.heatmaps {
            if h.width == 0 || h.height == 0 || !(h.sigma > 0.0) || !(h.amplitude > 0.0) {
                return Err(Error::Config("heatmap size, sigma and amplitude must be positive".into()));
            }
        }
        Ok(())
    }

    fn occlusion_for(&self, cam: &str) -> f64 {
        self.camera_occlusion.get(cam).copied().unwrap_or(self.occlusion)
    }
}

/// One heatmap frame of a camera together with the crop it was rendered in.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapFrame {
    pub frame: u64,
    pub crop_box: BBox,
    pub heatmap: Heatmap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraObservations {
    pub camera_id: String,
    pub keypoints: Vec<Pose2D>,
    pub heatmaps: Option<Vec<HeatmapFrame>>,
}

/// Gaussian bumps at the given crop-cell centers, one plane per joint.
pub fn render_heatmap(centers: &[Vec2], cfg: &HeatmapSynth) -> Heatmap {
    let mut hm = Heatmap::zeros(centers.len(), cfg.width, cfg.height);
    let k = -0.5 / (cfg.sigma * cfg.sigma);
    for (j, c) in centers.iter().enumerate() {
        let plane = hm.plane_mut(j);
        for v in 0..cfg.height {
            let dy = v as f64 - c.y;
            for u in 0..cfg.width {
                let dx = u as f64 - c.x;
                plane[v * cfg.width + u] = cfg.amplitude * (k * (dx * dx + dy * dy)).exp();
            }
        }
    }
    hm
}

/// Projects the ground truth into every camera. Each joint draws one
/// occlusion variate and two noise variates in a fixed order, so the same
/// seed gives the same observations whatever the probabilities.
pub fn observe(scene: &SynthScene) -> Result<Vec<CameraObservations>> {
    let noise = &scene.noise;
    let mut out = Vec::with_capacity(scene.cameras.len());
    for (ci, cam) in scene.cameras.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ OBSERVE_STREAM);
        rng.set_stream(ci as u64);
        let p_occ = noise.occlusion_for(&cam.id);
        let mut keypoints = Vec::with_capacity(scene.gt.len());
        let mut heatmaps = noise.heatmaps.as_ref().map(|_| Vec::with_capacity(scene.gt.len()));
        for pose in &scene.gt {
            let mut joints = Vec::with_capacity(NUM_JOINTS);
            let mut conf = Vec::with_capacity(NUM_JOINTS);
            for j in &pose.joints {
                let occluded = rng.random::<f64>() < p_occ;
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                match cam.project(j) {
                    Ok(px) => {
                        joints.push(px + noise.pixel_sigma * Vec2::new(nx, ny));
                        conf.push(if occluded { 0.0 } else { 1.0 });
                    }
                    Err(_) => {
                        joints.push(cam.principal_point());
                        conf.push(0.0);
                    }
                }
            }
            let kp = Pose2D::new(joints, conf, cam.id.clone(), pose.frame_index);
            if let (Some(list), Some(cfg)) = (heatmaps.as_mut(), noise.heatmaps.as_ref()) {
                let crop_box = subject_box(cam, pose)?;
                let crop = CropTransform::new(&crop_box, cfg.width, cfg.height)?;
                let centers: Vec<Vec2> = kp.joints.iter().map(|p| crop.to_cell(p)).collect();
                let mut heatmap = render_heatmap(&centers, cfg);
                for (j, c) in kp.confidence.iter().enumerate() {
                    if *c == 0.0 {
                        heatmap.plane_mut(j).fill(0.0);
                    }
                }
                list.push(HeatmapFrame { frame: pose.frame_index, crop_box, heatmap });
            }
            keypoints.push(kp);
        }
        out.push(CameraObservations { camera_id: cam.id.clone(), keypoints, heatmaps });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{MotionConfig, SceneConfig};
    use mvpose_core::heatmap::{keypoints_from_heatmaps, uncrop, DEFAULT_ALPHA};
    use mvpose_core::metrics::mpjpe;
    use mvpose_core::triangulation::triangulate_pose;

    fn scene(noise: NoiseConfig, seconds: f64) -> SynthScene {
        let cfg = SceneConfig {
            motion: MotionConfig { seconds, ..Default::default() },
            noise,
            seed: 5,
            ..Default::default()
        };
        SynthScene::generate(&cfg).unwrap()
    }

    #[test]
    fn noiseless_observations_triangulate_back() {
        let s = scene(NoiseConfig::default(), 2.0);
        let obs = observe(&s).unwrap();
        for (f, gt) in s.gt.iter().enumerate() {
            let views: Vec<Pose2D> = obs.iter().map(|o| o.keypoints[f].clone()).collect();
            let tri = triangulate_pose(&s.cameras, &views, gt.timestamp).unwrap();
            assert!(mpjpe(&tri.pose, gt).unwrap() < 1e-6 * 1000.0);
        }
    }

    #[test]
    fn pixel_noise_has_the_requested_sigma() {
        let noisy = scene(NoiseConfig { pixel_sigma: 2.0, ..Default::default() }, 4.0);
        let obs = observe(&noisy).unwrap();
        let mut residuals = Vec::new();
        for (o, cam) in obs.iter().zip(&noisy.cameras) {
            for (kp, gt) in o.keypoints.iter().zip(&noisy.gt) {
                for (px, j) in kp.joints.iter().zip(&gt.joints) {
                    let r = px - cam.project(j).unwrap();
                    residuals.extend([r.x, r.y]);
                }
            }
        }
        assert!(residuals.len() >= 10_000);
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let sd = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 2.0).abs() < 0.2, "sample sd {sd}");
    }

    #[test]
    fn fully_occluded_camera_has_zero_weight() {
        let mut noise = NoiseConfig::default();
        noise.camera_occlusion.insert("cam1".into(), 1.0);
        let obs = observe(&scene(noise, 1.0)).unwrap();
        assert!(obs[1].keypoints.iter().all(|k| k.confidence.iter().all(|c| *c == 0.0)));
        assert!(obs[0].keypoints.iter().all(|k| k.confidence.iter().all(|c| *c == 1.0)));
    }

    #[test]
    fn heatmaps_decode_to_projections() {
        let noise = NoiseConfig { heatmaps: Some(HeatmapSynth::default()), ..Default::default() };
        let s = scene(noise, 0.5);
        let obs = observe(&s).unwrap();
        for o in &obs {
            for (kp, hf) in o.keypoints.iter().zip(o.heatmaps.as_ref().unwrap()) {
                let crop = CropTransform::new(&hf.crop_box, hf.heatmap.width, hf.heatmap.height).unwrap();
                let cells = keypoints_from_heatmaps(&hf.heatmap, DEFAULT_ALPHA, false, "c", hf.frame).unwrap();
                for (c, px) in cells.joints.iter().zip(&kp.joints) {
                    assert!((c - crop.to_cell(px)).norm() < 0.1);
                }
                let img = uncrop(&cells, &crop);
                assert!(img.joints.iter().zip(&kp.joints).all(|(a, b)| (a - b).norm() < 1.0));
            }
        }
    }

    #[test]
    fn rejects_bad_noise() {
        let cams = super::super::make_rig(2, 3.0, 0.0, 500.0, (100, 100)).unwrap();
        assert!(NoiseConfig { pixel_sigma: -1.0, ..Default::default() }.validate(&cams).is_err());
        assert!(NoiseConfig { occlusion: 1.5, ..Default::default() }.validate(&cams).is_err());
        let mut n = NoiseConfig::default();
        n.camera_occlusion.insert("nope".into(), 0.5);
        assert!(n.validate(&cams).is_err());
    }
}
