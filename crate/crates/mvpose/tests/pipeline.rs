//! Pipeline runs on synthetic scenes through the library API.

use std::path::Path;

use mvpose::io::{read_jsonl, IkRecord, MuscleRecord, PoseRecord, TrackRecord};
use mvpose::pipeline::{run_pipeline, FileSink, InputMode, MemorySink, OutRecord, PipelineConfig, RunOptions};
use mvpose::synth::{write_scene, HeatmapSynth, MotionConfig, NoiseConfig, Scenario, SceneConfig, SynthScene};
use mvpose_core::metrics::mpjpe;
use mvpose_core::Pose3D;

fn scene(seconds: f64, noise: NoiseConfig, scenario: Scenario) -> SynthScene {
    let cfg = SceneConfig {
        motion: MotionConfig { seconds, ..Default::default() },
        noise,
        scenario,
        seed: 8,
        ..Default::default()
    };
    SynthScene::generate(&cfg).unwrap()
}

fn load(dir: &Path, s: &SynthScene) -> PipelineConfig {
    let files = write_scene(s, dir).unwrap();
    PipelineConfig::load(files.dir.join(files.pipeline)).unwrap()
}

fn poses(sink: &MemorySink) -> Vec<PoseRecord> {
    sink.records.iter().filter_map(|r| if let OutRecord::Pose(p) = r { Some(p.clone()) } else { None }).collect()
}

fn worst_error(poses: &[PoseRecord], gt: &[Pose3D]) -> f64 {
    poses.iter().map(|p| mpjpe(&p.to_pose(50.0).unwrap(), &gt[p.frame as usize]).unwrap()).fold(0.0, f64::max)
}

#[test]
fn heatmap_inputs_decode_through_the_tracked_crop() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(2.0, NoiseConfig { heatmaps: Some(HeatmapSynth::default()), ..Default::default() }, Scenario::IouWin);
    let mut cfg = load(dir.path(), &s);
    for i in &mut cfg.inputs {
        i.keypoints = None;
    }
    cfg.single_thread = true;
    let mut sink = MemorySink::default();
    let summary = run_pipeline(&cfg, RunOptions::default(), &mut sink).unwrap();
    let p = poses(&sink);
    assert_eq!(p.len(), 100);
    assert_eq!(summary.frames_triangulated, 100);
    // decoding is accurate to a fraction of a heatmap cell
    assert!(worst_error(&p, &s.gt) < 2.0, "{}", worst_error(&p, &s.gt));
    assert!(summary.timings.iter().all(|t| t.decode_2d > 0.0));
}

#[test]
fn frames_missing_from_one_camera_are_dropped_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(2.0, NoiseConfig::default(), Scenario::Single);
    let mut cfg = load(dir.path(), &s);
    let path = cfg.inputs[1].keypoints.clone().unwrap();
    let kept: Vec<String> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .enumerate()
        .filter(|(i, _)| !(20..26).contains(i))
        .map(|(_, l)| l.to_string())
        .collect();
    std::fs::write(&path, kept.join("\n")).unwrap();

    for (mode, single) in [(InputMode::Files, true), (InputMode::Files, false), (InputMode::Stream, false)] {
        cfg.mode = mode;
        cfg.single_thread = single;
        cfg.queue_capacity = 256;
        let mut sink = MemorySink::default();
        let summary = run_pipeline(&cfg, RunOptions::default(), &mut sink).unwrap();
        assert_eq!(summary.dropped_frames, (20..26).collect::<Vec<u64>>(), "{mode:?} single={single}");
        let p = poses(&sink);
        assert_eq!(p.len(), 94);
        assert!(worst_error(&p, &s.gt) < 1e-3);
    }
}

#[test]
fn stream_mode_keeps_frame_order_under_a_small_queue() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(4.0, NoiseConfig::default(), Scenario::Crossing);
    let mut cfg = load(dir.path(), &s);
    cfg.mode = InputMode::Stream;
    cfg.queue_capacity = 2;
    cfg.wait_window = 4;
    let mut sink = MemorySink::default();
    let summary = run_pipeline(&cfg, RunOptions::default(), &mut sink).unwrap();
    let p = poses(&sink);
    assert!(p.windows(2).all(|w| w[0].frame < w[1].frame));
    assert!(worst_error(&p, &s.gt) < 1e-3);
    assert_eq!(p.len(), summary.frames_triangulated);
    assert!(summary.frames_seen <= 200);
}

#[test]
fn paced_replay_holds_the_frame_rate() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(0.4, NoiseConfig::default(), Scenario::Single);
    let cfg = load(dir.path(), &s);
    let summary = run_pipeline(&cfg, RunOptions { pace_fps: Some(100.0) }, &mut MemorySink::default()).unwrap();
    // 20 frames at 100 fps span at least 190 ms
    assert!(summary.wall.as_secs_f64() >= 0.19);
}

#[test]
fn every_stream_carries_source_frame_indices() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(1.0, NoiseConfig { pixel_sigma: 0.5, ..Default::default() }, Scenario::Teleport);
    let mut cfg = load(dir.path(), &s);
    cfg.engine.enabled = true;
    cfg.ik.enabled = true;
    cfg.muscle.enabled = true;
    run_pipeline(&cfg, RunOptions::default(), &mut FileSink::new(&cfg.outputs).unwrap()).unwrap();
    let o = &cfg.outputs;
    let frames = |v: Vec<u64>| v.windows(2).all(|w| w[0] <= w[1]) && v.len() >= 49;
    assert!(frames(read_jsonl::<PoseRecord>(&o.poses).unwrap().iter().map(|r| r.frame).collect()));
    assert!(frames(read_jsonl::<PoseRecord>(&o.engine).unwrap().iter().map(|r| r.frame).collect()));
    assert!(frames(read_jsonl::<IkRecord>(&o.ik).unwrap().iter().map(|r| r.frame).collect()));
    assert!(frames(read_jsonl::<MuscleRecord>(&o.muscles).unwrap().iter().map(|r| r.frame).collect()));
    let tracks = read_jsonl::<TrackRecord>(&o.tracks).unwrap();
    assert_eq!(tracks.len(), 4 * 50);
    assert!(tracks.iter().all(|t| t.selected.extra["identity"] == "subject"));
}
