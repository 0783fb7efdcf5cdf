//! Pipeline stages. Each owns its state and is driven one frame at a time,
//! so the single-threaded and staged runners share the same logic.

use std::time::Instant;

use mvpose_core::camera::{to_engine_frame, CameraView, EngineFrameConfig};
use mvpose_core::heatmap::{keypoints_from_heatmaps, uncrop, CropTransform};
use mvpose_core::ik::RigSolver;
use mvpose_core::muscle::{muscle_levels, MuscleMap};
use mvpose_core::refiner::TemporalRefiner;
use mvpose_core::tracker::{track_step, TrackState, TrackerConfig};
use mvpose_core::triangulation::triangulate_pose;
use mvpose_core::{Pose2D, Pose3D};

use super::ms_since;
use super::source::CameraFrameInput;
use crate::io::{kind, IkRecord, MuscleRecord, PoseRecord, TrackRecord};
use crate::Result;

/// Per-frame stage latencies in milliseconds. Camera stages are summed over
/// cameras.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameTiming {
    pub ingest_prep: f64,
    pub detection_ingest: f64,
    pub track: f64,
    pub keypoint_prep: f64,
    pub decode_2d: f64,
    pub triangulate_3d: f64,
    pub refine: f64,
}

impl FrameTiming {
    pub const STAGES: [&'static str; 7] =
        ["ingest-prep", "detection-ingest", "track", "keypoint-prep", "2d-decode", "3d-triangulate", "refine"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.ingest_prep,
            self.detection_ingest,
            self.track,
            self.keypoint_prep,
            self.decode_2d,
            self.triangulate_3d,
            self.refine,
        ]
    }

    fn add_camera(&mut self, o: &CameraTiming) {
        self.ingest_prep += o.ingest;
        self.detection_ingest += o.detection;
        self.track += o.track;
        self.keypoint_prep += o.keypoint_prep;
        self.decode_2d += o.decode;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CameraTiming {
    pub ingest: f64,
    pub detection: f64,
    pub track: f64,
    pub keypoint_prep: f64,
    pub decode: f64,
}

/// Result of the per-camera stage for one frame. `pose` is `None` when the
/// camera could not produce keypoints for this frame.
#[derive(Debug, Clone)]
pub struct CameraOutput {
    pub cam: usize,
    pub frame: u64,
    pub pose: Option<Pose2D>,
    pub track: Option<TrackRecord>,
    pub timing: CameraTiming,
}

/// Tracking and keypoint decoding for one camera.
pub struct CameraStage {
    index: usize,
    camera: String,
    tracker: Option<TrackState>,
    tracker_cfg: TrackerConfig,
    alpha: f64,
}

impl CameraStage {
    pub fn new(index: usize, camera: impl Into<String>, tracker_cfg: TrackerConfig, alpha: f64) -> Self {
        Self { index, camera: camera.into(), tracker: None, tracker_cfg, alpha }
    }

    pub fn process(&mut self, input: CameraFrameInput) -> CameraOutput {
        let mut timing = CameraTiming { ingest: input.ingest_ms, detection: input.detection_ms, ..Default::default() };
        let frame = input.frame;
        let mut out = CameraOutput { cam: self.index, frame, pose: None, track: None, timing };

        let start = Instant::now();
        let selected = match &input.detections {
            Some(d) => match self.track(d) {
                Ok(step) => {
                    out.track = Some(TrackRecord::new(&d.record, &step));
                    Some(step.selected)
                }
                Err(e) => {
                    log::warn!("camera {} frame {frame}: tracking failed: {e}", self.camera);
                    None
                }
            },
            None => None,
        };
        timing.track = ms_since(start);

        let pose = match (&input.heatmap, input.keypoints) {
            (Some(hm), _) => {
                let Some(bbox) = selected else {
                    log::warn!("camera {} frame {frame}: no tracked box for heatmap crop", self.camera);
                    out.timing = timing;
                    return out;
                };
                let start = Instant::now();
                let decoded = keypoints_from_heatmaps(hm, self.alpha, false, self.camera.clone(), frame);
                timing.decode = ms_since(start);
                let start = Instant::now();
                let pose = decoded.and_then(|p| CropTransform::new(&bbox, hm.width, hm.height).map(|c| uncrop(&p, &c)));
                timing.keypoint_prep = ms_since(start);
                match pose {
                    Ok(p) => Some(p),
                    Err(e) => {
                        log::warn!("camera {} frame {frame}: heatmap decoding failed: {e}", self.camera);
                        None
                    }
                }
            }
            (None, Some(p)) => Some(p),
            (None, None) => None,
        };
        out.pose = pose;
        out.timing = timing;
        out
    }

    fn track(&mut self, d: &super::source::Detections) -> mvpose_core::Result<mvpose_core::tracker::TrackStep> {
        let boxes: Vec<_> = d.record.boxes.iter().map(|b| b.bbox()).collect();
        let state = match self.tracker.take() {
            Some(s) => s,
            None => {
                // start on the most confident box
                let i = (0..boxes.len())
                    .max_by(|&a, &b| boxes[a].score.total_cmp(&boxes[b].score).then(b.cmp(&a)))
                    .ok_or(mvpose_core::Error::NoDetections)?;
                let s = TrackState::new(boxes[i])?;
                match &d.patches {
                    Some(p) => s.with_patch(p[i].clone()),
                    None => s,
                }
            }
        };
        match track_step(&state, &boxes, d.patches.as_deref(), &self.tracker_cfg) {
            Ok(step) => {
                self.tracker = Some(step.state.clone());
                Ok(step)
            }
            Err(e) => {
                self.tracker = Some(state);
                Err(e)
            }
        }
    }
}

/// Output of the synchronization barrier for one frame index.
#[derive(Debug, Clone)]
pub struct SyncedFrame {
    pub frame: u64,
    /// One entry per camera in configuration order.
    pub views: Vec<Option<Pose2D>>,
    pub tracks: Vec<TrackRecord>,
    pub timing: FrameTiming,
}

impl SyncedFrame {
    pub fn missing(&self) -> Vec<usize> {
        (0..self.views.len()).filter(|&i| self.views[i].is_none()).collect()
    }
}

/// Joins per-camera outputs on frame index. Callers feed camera heads in
/// any order; [`FrameSync::pop`] returns frames in increasing index.
pub struct FrameSync {
    heads: Vec<Option<CameraOutput>>,
    closed: Vec<bool>,
    last_emitted: Option<u64>,
}

impl FrameSync {
    pub fn new(cameras: usize) -> Self {
        Self { heads: vec![None; cameras], closed: vec![false; cameras], last_emitted: None }
    }

    /// Cameras that need a new head before the next frame can be decided.
    pub fn wanting(&self) -> Vec<usize> {
        (0..self.heads.len()).filter(|&i| self.heads[i].is_none() && !self.closed[i]).collect()
    }

    pub fn close(&mut self, cam: usize) {
        self.closed[cam] = true;
    }

    pub fn is_done(&self) -> bool {
        self.heads.iter().all(Option::is_none) && self.closed.iter().all(|c| *c)
    }

    /// Stores a camera's next output. Outputs for frames already emitted are
    /// dropped and logged; returns whether it was accepted.
    pub fn offer(&mut self, out: CameraOutput) -> bool {
        if self.last_emitted.is_some_and(|l| out.frame <= l) {
            log::warn!("camera {} frame {} arrived after its frame was synchronized; dropped", out.cam, out.frame);
            return false;
        }
        let cam = out.cam;
        debug_assert!(self.heads[cam].is_none());
        self.heads[cam] = Some(out);
        true
    }

    fn min_head(&self) -> Option<u64> {
        self.heads.iter().flatten().map(|h| h.frame).min()
    }

    fn max_head(&self) -> Option<u64> {
        self.heads.iter().flatten().map(|h| h.frame).max()
    }

    /// Decides the lowest pending frame once every open camera has a head.
    /// With `wait_window`, cameras lagging by more than that many frames
    /// behind the newest head are treated as missing.
    pub fn pop(&mut self, wait_window: Option<u64>) -> Option<SyncedFrame> {
        let frame = self.min_head()?;
        if !self.wanting().is_empty() {
            let lag = self.max_head()? - frame;
            match wait_window {
                Some(w) if lag > w => {}
                _ => return None,
            }
        }
        let mut synced = SyncedFrame {
            frame,
            views: vec![None; self.heads.len()],
            tracks: Vec::new(),
            timing: FrameTiming::default(),
        };
        for (i, head) in self.heads.iter_mut().enumerate() {
            if head.as_ref().is_some_and(|h| h.frame == frame) {
                let h = head.take().expect("checked");
                synced.timing.add_camera(&h.timing);
                synced.tracks.extend(h.track);
                synced.views[i] = h.pose;
            }
        }
        self.last_emitted = Some(frame);
        Some(synced)
    }
}

/// Records produced downstream of the barrier, in emission order.
#[derive(Debug, Clone, PartialEq)]
pub enum OutRecord {
    Track(TrackRecord),
    Pose(PoseRecord),
    Engine(PoseRecord),
    Ik(IkRecord),
    Muscle(MuscleRecord),
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub frame: u64,
    pub records: Vec<OutRecord>,
    pub triangulated: bool,
    pub timing: FrameTiming,
}

/// Triangulation, refinement, engine export, IK and muscle levels.
pub struct Downstream {
    pub cameras: Vec<CameraView>,
    pub camera_names: Vec<String>,
    pub fps: f64,
    pub refiner: Option<TemporalRefiner>,
    pub engine: Option<EngineFrameConfig>,
    pub ik: Option<RigSolver>,
    pub muscle: Option<(MuscleMap, Option<f64>)>,
    prev_emitted: Option<Pose3D>,
    last_frame: Option<u64>,
}

impl Downstream {
    pub fn new(cameras: Vec<CameraView>, camera_names: Vec<String>, fps: f64) -> Self {
        Self {
            cameras,
            camera_names,
            fps,
            refiner: None,
            engine: None,
            ik: None,
            muscle: None,
            prev_emitted: None,
            last_frame: None,
        }
    }

    pub fn process(&mut self, synced: SyncedFrame) -> Result<FrameResult> {
        let frame = synced.frame;
        let mut timing = synced.timing;
        let mut records: Vec<OutRecord> = synced.tracks.into_iter().map(OutRecord::Track).collect();
        let missing: Vec<&str> =
            synced.views.iter().zip(&self.camera_names).filter(|(v, _)| v.is_none()).map(|(_, n)| n.as_str()).collect();
        if !missing.is_empty() {
            log::warn!("frame {frame}: missing from camera(s) {}; dropped", missing.join(", "));
            return Ok(FrameResult { frame, records, triangulated: false, timing });
        }
        let views: Vec<Pose2D> = synced.views.into_iter().flatten().collect();

        let start = Instant::now();
        let tri = triangulate_pose(&self.cameras, &views, frame as f64 / self.fps);
        timing.triangulate_3d = ms_since(start);
        let tri = match tri {
            Ok(t) => t,
            Err(e) => {
                log::warn!("frame {frame}: triangulation failed: {e}; dropped");
                return Ok(FrameResult { frame, records, triangulated: false, timing });
            }
        };
        if self.last_frame.is_some_and(|l| l + 1 != frame) {
            log::info!("frame {frame}: gap after frame {}", self.last_frame.unwrap_or(0));
            self.prev_emitted = None;
        }
        self.last_frame = Some(frame);

        let mut emitted: Vec<(Pose3D, &'static str, Option<Vec<f64>>)> = Vec::with_capacity(2);
        match self.refiner.as_mut() {
            None => emitted.push((tri.pose, kind::MEASURED, Some(tri.residuals))),
            Some(r) => {
                let start = Instant::now();
                let (outcome, pair) = r.push(tri.pose)?;
                timing.refine = ms_since(start);
                if let Some(g) = outcome.gap {
                    log::info!("refiner window restarted: expected frame {}, got {}", g.expected, g.found);
                }
                if let Some(pair) = pair {
                    emitted.push((pair.intermediate, kind::INTERMEDIATE, None));
                    emitted.push((pair.refined, kind::REFINED, None));
                }
            }
        }

        for (pose, tag, residual) in emitted {
            let mut rec = PoseRecord::from_pose(&pose, Some(tag));
            if let Some(r) = residual {
                rec = rec.with_residual(r);
            }
            records.push(OutRecord::Pose(rec));
            if let Some(cfg) = &self.engine {
                let e = to_engine_frame(&pose, cfg)?;
                records.push(OutRecord::Engine(PoseRecord::from_pose(&e, Some(kind::ENGINE))));
            }
            if let Some(solver) = self.ik.as_mut() {
                let sol = solver.solve(&pose)?;
                let names = solver.rig().chains.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
                let mut rec = IkRecord::new(pose.frame_index, pose.timestamp, &sol, names);
                rec.kind = Some(tag.into());
                records.push(OutRecord::Ik(rec));
            }
            if let Some((map, dt)) = &self.muscle {
                if let Some(prev) = &self.prev_emitted {
                    let step = dt.unwrap_or(pose.timestamp - prev.timestamp);
                    let levels = muscle_levels(prev, &pose, map, step)?;
                    let mut rec = MuscleRecord::from(&levels);
                    rec.kind = Some(tag.into());
                    records.push(OutRecord::Muscle(rec));
                }
            }
            self.prev_emitted = Some(pose);
        }
        Ok(FrameResult { frame, records, triangulated: true, timing })
    }
}
