use std::path::{Path, PathBuf};

use mvpose_core::camera::EngineFrameConfig;
use mvpose_core::ik::IkConfig;
use mvpose_core::muscle::Thresholds;
use mvpose_core::tracker::TrackerConfig;
use serde::{Deserialize, Serialize};

use crate::io::{read_json, EngineFrameFile};
use crate::{Error, Result};

pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Replay files; full queues block the producer, nothing is dropped.
    #[default]
    Files,
    /// Live-style input; full queues drop their oldest frame and frames
    /// missing from a camera for more than `wait_window` frames are dropped.
    Stream,
}

/// Inputs of one camera. Heatmaps need detections for the crop box; when
/// both heatmaps and keypoints are given the heatmaps are decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraInput {
    pub cam: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmaps: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RefinerStage {
    pub enabled: bool,
    /// Zero weights are used when absent.
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkStage {
    pub enabled: bool,
    /// Built-in five-chain rig when absent.
    pub rig: Option<PathBuf>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IkStage {
    fn default() -> Self {
        let d = IkConfig::default();
        Self { enabled: false, rig: None, tol: d.tol, max_iter: d.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MuscleStage {
    pub enabled: bool,
    /// Built-in map when absent.
    pub map: Option<PathBuf>,
    pub slow: f64,
    pub intense: f64,
    /// Time step for joint velocities; defaults to the spacing of emitted poses.
    pub dt: Option<f64>,
}

impl Default for MuscleStage {
    fn default() -> Self {
        let t = Thresholds::default();
        Self { enabled: false, map: None, slow: t.slow, intense: t.intense, dt: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EngineStage {
    pub enabled: bool,
    #[serde(flatten)]
    pub frame: EngineFrameFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerSettings {
    pub iou_gate: f64,
    pub tie_margin: f64,
    pub descriptor_blend: f64,
}

impl Default for TrackerSettings {
    fn default() -> Self {
        let d = TrackerConfig::default();
        Self { iou_gate: d.iou_gate, tie_margin: d.tie_margin, descriptor_blend: d.descriptor_blend }
    }
}

impl TrackerSettings {
    pub fn to_config(&self) -> TrackerConfig {
        TrackerConfig { iou_gate: self.iou_gate, tie_margin: self.tie_margin, descriptor_blend: self.descriptor_blend }
    }
}

/// Output files. Streams whose stage is disabled are not written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Outputs {
    pub poses: PathBuf,
    pub engine: PathBuf,
    pub ik: PathBuf,
    pub muscles: PathBuf,
    /// Tracker decisions, written when any camera has detections.
    pub tracks: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            poses: "poses.jsonl".into(),
            engine: "engine_poses.jsonl".into(),
            ik: "ik.jsonl".into(),
            muscles: "muscles.jsonl".into(),
            tracks: "tracks.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub cameras: PathBuf,
    pub inputs: Vec<CameraInput>,
    pub mode: InputMode,
    pub fps: f64,
    /// Softmax temperature for heatmap decoding.
    pub alpha: f64,
    /// Loss mixing used when training from this config.
    pub alpha_loss: f64,
    pub refiner: RefinerStage,
    pub ik: IkStage,
    pub muscle: MuscleStage,
    pub engine: EngineStage,
    pub tracker: TrackerSettings,
    /// Frames a camera may lag behind the others before its frame is dropped
    /// (stream mode).
    pub wait_window: u64,
    pub queue_capacity: usize,
    pub outputs: Outputs,
    pub seed: u64,
    pub single_thread: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cameras: "cameras.json".into(),
            inputs: Vec::new(),
            mode: InputMode::Files,
            fps: 50.0,
            alpha: mvpose_core::heatmap::DEFAULT_ALPHA,
            alpha_loss: 0.5,
            refiner: RefinerStage::default(),
            ik: IkStage::default(),
            muscle: MuscleStage::default(),
            engine: EngineStage::default(),
            tracker: TrackerSettings::default(),
            wait_window: 8,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            outputs: Outputs::default(),
            seed: 0,
            single_thread: false,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: PipelineConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.cameras);
        for i in &mut self.inputs {
            for p in [&mut i.keypoints, &mut i.detections, &mut i.heatmaps].into_iter().flatten() {
                resolve(base, p);
            }
        }
        for p in [&mut self.refiner.weights, &mut self.ik.rig, &mut self.muscle.map].into_iter().flatten() {
            resolve(base, p);
        }
        let o = &mut self.outputs;
        for p in [&mut o.poses, &mut o.engine, &mut o.ik, &mut o.muscles, &mut o.tracks] {
            resolve(base, p);
        }
    }

    /// Checks values, camera count and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.inputs.len() < 2 {
            return cfg(format!("triangulation needs at least 2 cameras, config lists {}", self.inputs.len()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return cfg(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return cfg(format!("heatmap alpha must be positive, got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.alpha_loss) {
            return cfg(format!("alpha_loss {} outside [0, 1]", self.alpha_loss));
        }
        if self.queue_capacity == 0 {
            return cfg("queue capacity must be positive".into());
        }
        if !(self.ik.tol > 0.0) || self.ik.max_iter == 0 {
            return cfg("ik tol and max_iter must be positive".into());
        }
        if let Some(dt) = self.muscle.dt {
            if !(dt > 0.0) {
                return cfg(format!("muscle dt must be positive, got {dt}"));
            }
        }
        Thresholds { slow: self.muscle.slow, intense: self.muscle.intense }.validate()?;
        let t = &self.tracker;
        if !(0.0..=1.0).contains(&t.iou_gate)
            || !(0.0..=1.0).contains(&t.tie_margin)
            || !(0.0..=1.0).contains(&t.descriptor_blend)
        {
            return cfg("tracker settings must lie in [0, 1]".into());
        }
        if self.engine.enabled {
            self.engine_config()?;
        }
        let mut files: Vec<&PathBuf> = vec![&self.cameras];
        for (i, input) in self.inputs.iter().enumerate() {
            if self.inputs[..i].iter().any(|o| o.cam == input.cam) {
                return cfg(format!("camera {} listed twice", input.cam));
            }
            if input.keypoints.is_none() && input.heatmaps.is_none() {
                return cfg(format!("camera {} needs keypoints or heatmaps", input.cam));
            }
            if input.heatmaps.is_some() && input.detections.is_none() {
                return cfg(format!("camera {}: heatmaps need detections for the crop box", input.cam));
            }
            files.extend([&input.keypoints, &input.detections, &input.heatmaps].into_iter().flatten());
        }
        if self.refiner.enabled {
            files.extend(&self.refiner.weights);
        }
        if self.ik.enabled {
            files.extend(&self.ik.rig);
        }
        if self.muscle.enabled {
            files.extend(&self.muscle.map);
        }
        if let Some(missing) = files.iter().find(|p| !p.is_file()) {
            return cfg(format!("referenced file {} does not exist", missing.display()));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> Result<EngineFrameConfig> {
        self.engine.frame.to_config()
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds { slow: self.muscle.slow, intense: self.muscle.intense }
    }
}
