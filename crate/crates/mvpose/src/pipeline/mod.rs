//! End-to-end pipeline: ingest, track, decode keypoints, synchronize views,
//! triangulate, refine, export to the engine frame, drive the IK rig and
//! classify muscle intensity.
//!
//! Two runners share the same stage objects. The single-threaded runner
//! pulls camera frames in a deterministic merge order. The staged runner
//! gives every camera its own thread, then a synchronization thread and a
//! downstream thread, connected by bounded queues.

mod config;
mod queue;
mod sink;
mod source;
mod stages;

pub use config::{
    CameraInput, EngineStage, IkStage, InputMode, MuscleStage, Outputs, PipelineConfig, RefinerStage, TrackerSettings,
    DEFAULT_QUEUE_CAPACITY,
};
pub use queue::{BoundedQueue, QueuePolicy};
pub use sink::{FileSink, MemorySink, NullSink, RecordSink};
pub use source::{CameraFrameInput, CameraSource, Detections};
pub use stages::{
    CameraOutput, CameraStage, CameraTiming, Downstream, FrameResult, FrameSync, FrameTiming, OutRecord, SyncedFrame,
};

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use mvpose_core::ik::{IkConfig, Rig, RigSolver};
use mvpose_core::muscle::MuscleMap;
use mvpose_core::refiner::{RefinerWeights, TemporalRefiner, DEFAULT_HIDDEN};

use crate::io::{read_cameras, read_muscle_map, read_rig, read_weights};
use crate::{Error, Result};

pub(crate) fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runner settings that are not part of the config file.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Release input frames no faster than this rate (frames per second).
    pub pace_fps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineSummary {
    /// Frame indices that reached the barrier.
    pub frames_seen: usize,
    pub frames_triangulated: usize,
    pub dropped_frames: Vec<u64>,
    pub pose_records: usize,
    /// Camera frames discarded by full stream-mode queues.
    pub queue_drops: u64,
    pub timings: Vec<FrameTiming>,
    pub wall: Duration,
}

/// Loads calibration and model files and builds the downstream stage.
pub fn build_downstream(cfg: &PipelineConfig) -> Result<Downstream> {
    let all = read_cameras(&cfg.cameras)?;
    let mut cameras = Vec::with_capacity(cfg.inputs.len());
    for input in &cfg.inputs {
        let c = all
            .iter()
            .find(|c| c.id == input.cam)
            .ok_or_else(|| Error::Config(format!("camera {} is not in {}", input.cam, cfg.cameras.display())))?;
        cameras.push(c.clone());
    }
    let names = cfg.inputs.iter().map(|i| i.cam.clone()).collect();
    let mut d = Downstream::new(cameras, names, cfg.fps);
    if cfg.refiner.enabled {
        let w = match &cfg.refiner.weights {
            Some(p) => read_weights(p)?,
            None => {
                log::warn!("refiner enabled without weights; using zero weights");
                RefinerWeights::zeros(DEFAULT_HIDDEN)
            }
        };
        d.refiner = Some(TemporalRefiner::new(w)?);
    }
    if cfg.engine.enabled {
        d.engine = Some(cfg.engine_config()?);
    }
    if cfg.ik.enabled {
        let rig = match &cfg.ik.rig {
            Some(p) => read_rig(p)?,
            None => Rig::h36m_default(),
        };
        d.ik = Some(RigSolver::new(rig, IkConfig { tol: cfg.ik.tol, max_iter: cfg.ik.max_iter })?);
    }
    if cfg.muscle.enabled {
        let mut map = match &cfg.muscle.map {
            Some(p) => read_muscle_map(p)?,
            None => MuscleMap::default(),
        };
        map.thresholds = cfg.thresholds();
        map.validate()?;
        d.muscle = Some((map, cfg.muscle.dt));
    }
    Ok(d)
}

fn camera_stages(cfg: &PipelineConfig) -> Vec<CameraStage> {
    cfg.inputs
        .iter()
        .enumerate()
        .map(|(i, input)| CameraStage::new(i, input.cam.clone(), cfg.tracker.to_config(), cfg.alpha))
        .collect()
}

/// Runs the configured pipeline and writes every output stream through `sink`.
pub fn run_pipeline(cfg: &PipelineConfig, opts: RunOptions, sink: &mut dyn RecordSink) -> Result<PipelineSummary> {
    cfg.validate()?;
    let downstream = build_downstream(cfg)?;
    let sources: Vec<CameraSource> = cfg.inputs.iter().map(CameraSource::open).collect::<Result<_>>()?;
    let start = Instant::now();
    let mut summary = if cfg.single_thread {
        run_single(cfg, opts, sources, downstream, sink)?
    } else {
        run_staged(cfg, opts, sources, downstream, sink)?
    };
    sink.finish()?;
    summary.wall = start.elapsed();
    if !summary.dropped_frames.is_empty() {
        log::warn!("{} frame(s) dropped: {:?}", summary.dropped_frames.len(), summary.dropped_frames);
    }
    Ok(summary)
}

fn record(summary: &mut PipelineSummary, result: &FrameResult, sink: &mut dyn RecordSink) -> Result<()> {
    summary.frames_seen += 1;
    if result.triangulated {
        summary.frames_triangulated += 1;
    } else {
        summary.dropped_frames.push(result.frame);
    }
    for r in &result.records {
        if matches!(r, OutRecord::Pose(_)) {
            summary.pose_records += 1;
        }
        sink.write(r)?;
    }
    summary.timings.push(result.timing);
    Ok(())
}

struct Pacer {
    start: Instant,
    fps: Option<f64>,
    first: Option<u64>,
}

impl Pacer {
    fn new(fps: Option<f64>) -> Self {
        Self { start: Instant::now(), fps, first: None }
    }

    fn wait(&mut self, frame: u64) {
        let Some(fps) = self.fps else { return };
        let first = *self.first.get_or_insert(frame);
        let due = self.start + Duration::from_secs_f64((frame - first) as f64 / fps);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
}

fn run_single(
    cfg: &PipelineConfig,
    opts: RunOptions,
    mut sources: Vec<CameraSource>,
    mut downstream: Downstream,
    sink: &mut dyn RecordSink,
) -> Result<PipelineSummary> {
    let mut stages = camera_stages(cfg);
    let mut pacers: Vec<Pacer> = sources.iter().map(|_| Pacer::new(opts.pace_fps)).collect();
    let mut sync = FrameSync::new(sources.len());
    let mut summary = PipelineSummary::default();
    loop {
        for cam in sync.wanting() {
            match sources[cam].next() {
                None => sync.close(cam),
                Some(input) => {
                    let input = input?;
                    pacers[cam].wait(input.frame);
                    sync.offer(stages[cam].process(input));
                }
            }
        }
        match sync.pop(None) {
            Some(frame) => {
                let result = downstream.process(frame)?;
                record(&mut summary, &result, sink)?;
            }
            None if sync.is_done() => break,
            None => {}
        }
    }
    Ok(summary)
}

const POLL: Duration = Duration::from_millis(2);

fn run_staged(
    cfg: &PipelineConfig,
    opts: RunOptions,
    sources: Vec<CameraSource>,
    mut downstream: Downstream,
    sink: &mut dyn RecordSink,
) -> Result<PipelineSummary> {
    let policy = match cfg.mode {
        InputMode::Files => QueuePolicy::Block,
        InputMode::Stream => QueuePolicy::DropOldest,
    };
    let wait_window = match cfg.mode {
        InputMode::Files => None,
        InputMode::Stream => Some(cfg.wait_window),
    };
    let cap = cfg.queue_capacity;
    let queue_drops = AtomicU64::new(0);
    let camera_queues: Vec<BoundedQueue<Result<CameraOutput>>> =
        (0..sources.len()).map(|_| BoundedQueue::new(cap, policy)).collect();
    let synced_queue: BoundedQueue<SyncedFrame> = BoundedQueue::new(cap, QueuePolicy::Block);
    let result_queue: BoundedQueue<Result<FrameResult>> = BoundedQueue::new(cap, QueuePolicy::Block);
    let mut stages = camera_stages(cfg);

    let mut summary = PipelineSummary::default();
    std::thread::scope(|s| -> Result<()> {
        for ((mut source, mut stage), q) in sources.into_iter().zip(stages.drain(..)).zip(&camera_queues) {
            let tx = q.sender();
            let drops = &queue_drops;
            s.spawn(move || {
                let mut pacer = Pacer::new(opts.pace_fps);
                let cam = source.camera().to_string();
                for input in source.by_ref() {
                    let item = input.map(|i| {
                        pacer.wait(i.frame);
                        stage.process(i)
                    });
                    let fatal = item.is_err();
                    match tx.push(item) {
                        Ok(dropped) => {
                            if dropped > 0 {
                                drops.fetch_add(dropped, Ordering::Relaxed);
                                log::warn!("camera {}: queue full, dropped oldest frame", cam);
                            }
                        }
                        Err(_) => return,
                    }
                    if fatal {
                        return;
                    }
                }
            });
        }

        let sync_rx: Vec<_> = camera_queues.iter().map(|q| q.receiver()).collect();
        let synced_tx = synced_queue.sender();
        let result_tx_sync = result_queue.sender();
        s.spawn(move || {
            let mut sync = FrameSync::new(sync_rx.len());
            loop {
                for cam in sync.wanting() {
                    let got = match wait_window {
                        None => sync_rx[cam].recv().map(Some).map_err(|_| ()),
                        Some(_) => match sync_rx[cam].recv_timeout(POLL) {
                            Ok(v) => Ok(Some(v)),
                            Err(crossbeam_channel::RecvTimeoutError::Timeout) => Ok(None),
                            Err(crossbeam_channel::RecvTimeoutError::Disconnected) => Err(()),
                        },
                    };
                    match got {
                        Err(()) => sync.close(cam),
                        Ok(None) => {}
                        Ok(Some(Ok(out))) => {
                            sync.offer(out);
                        }
                        Ok(Some(Err(e))) => {
                            let _ = result_tx_sync.push(Err(e));
                            return;
                        }
                    }
                }
                match sync.pop(wait_window) {
                    Some(frame) => {
                        if synced_tx.push(frame).is_err() {
                            return;
                        }
                    }
                    None if sync.is_done() => return,
                    None => {}
                }
            }
        });

        let synced_rx = synced_queue.receiver();
        let result_tx = result_queue.sender();
        s.spawn(move || {
            while let Ok(frame) = synced_rx.recv() {
                let r = downstream.process(frame);
                let stop = r.is_err();
                if result_tx.push(r).is_err() || stop {
                    return;
                }
            }
        });

        // the runner keeps no senders of its own
        drop(camera_queues);
        drop(synced_queue);
        let results = result_queue.receiver();
        drop(result_queue);
        while let Ok(r) = results.recv() {
            record(&mut summary, &r?, sink)?;
        }
        Ok(())
    })?;
    summary.queue_drops = queue_drops.load(Ordering::Relaxed);
    Ok(summary)
}
