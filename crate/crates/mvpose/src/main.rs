use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvpose::bench::bench;
use mvpose::io::{
    kind, read_json, read_jsonl, read_muscle_map, read_patches, read_rig, read_weights, write_json, write_text,
    write_weights, DetectionRecord, IkRecord, JsonlReader, JsonlWriter, KeypointRecord, MuscleRecord, PoseRecord,
};
use mvpose::pipeline::{
    run_pipeline, CameraFrameInput, CameraInput, CameraStage, Detections, FileSink, PipelineConfig, RunOptions,
    TrackerSettings,
};
use mvpose::synth::{
    refiner_trajectories, write_scene, HeatmapSynth, MotionConfig, MotionKind, Scenario, SceneConfig, SynthScene,
};
use mvpose::{Error, Result};
use mvpose_core::ik::{IkConfig, Rig, RigSolver};
use mvpose_core::metrics::{evaluate, LabeledSequence};
use mvpose_core::muscle::{muscle_levels, MuscleMap, Thresholds};
use mvpose_core::refiner::{train, RefinerHyperparams, TemporalRefiner, TrainingSet, Trajectory, VelocityForm};
use mvpose_core::Pose3D;

#[derive(Parser, Debug)]
#[command(name = "mvpose", version, about = "Multi-camera 3D pose reconstruction and analysis")]
struct Cli {
    /// JSON config file (pipeline config, or scene config for `synth`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    single_thread: bool,
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene and its pipeline inputs.
    Synth(SynthArgs),
    /// Follow the subject through a detection stream.
    Track(TrackArgs),
    /// Triangulate 3D poses from per-camera keypoint files.
    Triangulate(TriangulateArgs),
    /// Train refiner weights.
    SmoothTrain(SmoothTrainArgs),
    /// Refine a pose stream and double its frame rate.
    Smooth(SmoothArgs),
    /// Fit the joint-chain rig to a pose stream.
    Ik(IkArgs),
    /// Classify muscle intensity from a pose stream.
    Muscle(MuscleArgs),
    /// Compare predicted poses with ground truth.
    Eval(EvalArgs),
    /// Run the full pipeline from `--config`.
    Pipeline(PipelineArgs),
    /// Measure per-stage latency of the pipeline from `--config`.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    cameras: Option<usize>,
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long)]
    fps: Option<f64>,
    /// walk, squat, arm_raise or leg_fold.
    #[arg(long)]
    motion: Option<MotionKind>,
    #[arg(long)]
    tempo: Option<f64>,
    /// Pixel noise standard deviation.
    #[arg(long)]
    noise_px: Option<f64>,
    #[arg(long)]
    occlusion: Option<f64>,
    /// Also write heatmap streams.
    #[arg(long)]
    heatmaps: bool,
    /// single, iou_win, crossing or teleport.
    #[arg(long)]
    scenario: Option<Scenario>,
}

#[derive(Args, Debug)]
struct TrackArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TriangulateArgs {
    #[arg(long)]
    cameras: PathBuf,
    /// One keypoint file per camera.
    #[arg(long, required = true, num_args = 1..)]
    keypoints: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SmoothTrainArgs {
    /// Clean pose files, paired in order with `--noisy`.
    #[arg(long, num_args = 1..)]
    clean: Vec<PathBuf>,
    /// Noisy pose files; noise of `--noise-mm` is added when absent.
    #[arg(long, num_args = 1..)]
    noisy: Vec<PathBuf>,
    /// Train on generated motions instead of files.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 20.0)]
    noise_mm: f64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    samples_per_epoch: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    alpha_loss: Option<f64>,
    /// Velocity term as the product |dG|*|dY| instead of |dG - dY|.
    #[arg(long)]
    literal_velocity: bool,
    #[arg(long)]
    out: PathBuf,
    /// CSV with the loss after each epoch.
    #[arg(long)]
    loss_curve: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SmoothArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    fps: f64,
}

#[derive(Args, Debug)]
struct IkArgs {
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    #[arg(long, default_value_t = 50.0)]
    fps: f64,
}

#[derive(Args, Debug)]
struct MuscleArgs {
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, default_value_t = 0.08)]
    slow: f64,
    #[arg(long, default_value_t = 0.2)]
    intense: f64,
    /// Fixed time step; timestamps are used otherwise.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    fps: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, required = true, num_args = 1..)]
    pred: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    gt: Vec<PathBuf>,
    /// Action label per sequence; the file stem by default.
    #[arg(long, num_args = 1..)]
    label: Vec<String>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 50.0)]
    fps: f64,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Release input frames at this rate instead of as fast as possible.
    #[arg(long)]
    pace_fps: Option<f64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long)]
    pace_fps: Option<f64>,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_kind() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Track(a) => track(cli, a),
        Command::Triangulate(a) => triangulate(cli, a),
        Command::SmoothTrain(a) => smooth_train(cli, a),
        Command::Smooth(a) => smooth(a),
        Command::Ik(a) => ik(a),
        Command::Muscle(a) => muscle(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => {
            let cfg = pipeline_config(cli)?;
            let mut sink = FileSink::new(&cfg.outputs)?;
            let s = run_pipeline(&cfg, RunOptions { pace_fps: a.pace_fps }, &mut sink)?;
            log::info!(
                "{} frames, {} triangulated, {} pose records in {:.2} s",
                s.frames_seen,
                s.frames_triangulated,
                s.pose_records,
                s.wall.as_secs_f64()
            );
            Ok(())
        }
        Command::Bench(a) => {
            let cfg = pipeline_config(cli)?;
            let report = bench(&cfg, a.repetitions, RunOptions { pace_fps: a.pace_fps })?;
            print!("{}", report.table());
            if let Some(out) = &a.out {
                write_json(out, &report)?;
            }
            Ok(())
        }
    }
}

fn pipeline_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.single_thread |= cli.single_thread;
    Ok(cfg)
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let mut cfg: SceneConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => SceneConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(v) = a.cameras {
        cfg.rig.cameras = v;
    }
    if let Some(v) = a.seconds {
        cfg.motion.seconds = v;
    }
    if let Some(v) = a.fps {
        cfg.motion.fps = v;
    }
    if let Some(v) = a.motion {
        cfg.motion.kind = v;
    }
    if let Some(v) = a.tempo {
        cfg.motion.tempo = v;
    }
    if let Some(v) = a.noise_px {
        cfg.noise.pixel_sigma = v;
    }
    if let Some(v) = a.occlusion {
        cfg.noise.occlusion = v;
    }
    if a.heatmaps && cfg.noise.heatmaps.is_none() {
        cfg.noise.heatmaps = Some(HeatmapSynth::default());
    }
    if let Some(v) = a.scenario {
        cfg.scenario = v;
    }
    let scene = SynthScene::generate(&cfg)?;
    let files = write_scene(&scene, &a.out)?;
    log::info!("wrote {} frames for {} cameras to {}", scene.gt.len(), scene.cameras.len(), files.dir.display());
    Ok(())
}

fn track(cli: &Cli, a: &TrackArgs) -> Result<()> {
    let settings = match &cli.config {
        Some(p) => PipelineConfig::load(p)?.tracker,
        None => TrackerSettings::default(),
    };
    let base = a.detections.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut out = JsonlWriter::create(&a.out)?;
    let mut stage: Option<CameraStage> = None;
    for record in JsonlReader::<DetectionRecord>::open(&a.detections)? {
        let record = record?;
        let patches = match &record.patches {
            Some(name) => Some(read_patches(base.join(name), record.patch_offset.unwrap_or(0), record.boxes.len())?),
            None => None,
        };
        let stage = stage.get_or_insert_with(|| CameraStage::new(0, record.cam.clone(), settings.to_config(), 100.0));
        let frame = record.frame;
        let input = CameraFrameInput {
            frame,
            keypoints: None,
            heatmap: None,
            detections: Some(Detections { record, patches }),
            ingest_ms: 0.0,
            detection_ms: 0.0,
        };
        if let Some(t) = stage.process(input).track {
            out.write(&t)?;
        }
    }
    out.finish()
}

fn triangulate(cli: &Cli, a: &TriangulateArgs) -> Result<()> {
    let mut inputs = Vec::with_capacity(a.keypoints.len());
    for path in &a.keypoints {
        let first = JsonlReader::<KeypointRecord>::open(path)?.next().ok_or_else(|| Error::Record {
            path: path.clone(),
            line: 1,
            message: "no keypoint records".into(),
        })??;
        inputs.push(CameraInput { cam: first.cam, keypoints: Some(path.clone()), detections: None, heatmaps: None });
    }
    let mut cfg =
        PipelineConfig { cameras: a.cameras.clone(), inputs, single_thread: cli.single_thread, ..Default::default() };
    cfg.muscle.enabled = false;
    cfg.ik.enabled = false;
    cfg.engine.enabled = false;
    cfg.refiner.enabled = false;
    cfg.outputs.poses = a.out.clone();
    let mut sink = FileSink::new(&cfg.outputs)?;
    run_pipeline(&cfg, RunOptions::default(), &mut sink)?;
    Ok(())
}

/// Pose records that describe measured or refined frames.
fn read_poses(path: &Path, fps: f64) -> Result<Vec<(PoseRecord, Pose3D)>> {
    let mut out = Vec::new();
    for rec in read_jsonl::<PoseRecord>(path)? {
        if matches!(rec.kind.as_deref(), Some(kind::INTERMEDIATE | kind::ENGINE)) {
            continue;
        }
        let pose = rec.to_pose(fps)?;
        out.push((rec, pose));
    }
    Ok(out)
}

fn smooth_train(cli: &Cli, a: &SmoothTrainArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let sigma = a.noise_mm / 1e3;
    let trajectories: Vec<Trajectory> = if a.synthetic {
        let motions: Vec<MotionConfig> =
            MotionKind::ALL.iter().map(|&k| MotionConfig { kind: k, ..Default::default() }).collect();
        let seeds: Vec<u64> = (0..6).map(|i| seed.wrapping_add(i)).collect();
        refiner_trajectories(&motions, &seeds, sigma, seed)?
    } else {
        if a.clean.is_empty() {
            return Err(Error::Config("give --clean files or --synthetic".into()));
        }
        if !a.noisy.is_empty() && a.noisy.len() != a.clean.len() {
            return Err(Error::Config(format!("{} --clean files but {} --noisy files", a.clean.len(), a.noisy.len())));
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut out = Vec::new();
        for (i, path) in a.clean.iter().enumerate() {
            let clean: Vec<Pose3D> = read_poses(path, 50.0)?.into_iter().map(|(_, p)| p).collect();
            let noisy = match a.noisy.get(i) {
                Some(p) => read_poses(p, 50.0)?.into_iter().map(|(_, p)| p).collect(),
                None => mvpose::synth::add_joint_noise(&clean, sigma, &mut rng)?,
            };
            out.push(Trajectory { clean, noisy, intermediate: None });
        }
        out
    };
    let mut hp = RefinerHyperparams { seed, ..Default::default() };
    if let Some(p) = &cli.config {
        hp.alpha_loss = PipelineConfig::load(p)?.alpha_loss;
    }
    hp.epochs = a.epochs.unwrap_or(hp.epochs);
    hp.learning_rate = a.learning_rate.unwrap_or(hp.learning_rate);
    hp.batch_size = a.batch_size.unwrap_or(hp.batch_size);
    hp.samples_per_epoch = a.samples_per_epoch.or(hp.samples_per_epoch);
    hp.hidden = a.hidden.unwrap_or(hp.hidden);
    hp.alpha_loss = a.alpha_loss.unwrap_or(hp.alpha_loss);
    if a.literal_velocity {
        hp.velocity_form = VelocityForm::LiteralProduct;
    }
    let set = TrainingSet::new(&trajectories)?;
    let outcome = train(&set, &hp)?;
    write_weights(&a.out, &outcome.weights)?;
    if let Some(path) = &a.loss_curve {
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in outcome.loss_curve.iter().enumerate() {
            csv += &format!("{i},{l}\n");
        }
        write_text(path, &csv)?;
    }
    Ok(())
}

fn smooth(a: &SmoothArgs) -> Result<()> {
    let mut refiner = TemporalRefiner::new(read_weights(&a.weights)?)?;
    let mut out = JsonlWriter::create(&a.out)?;
    for (_, pose) in read_poses(&a.poses, a.fps)? {
        let (outcome, pair) = refiner.push(pose)?;
        if let Some(g) = outcome.gap {
            log::info!("refiner window restarted: expected frame {}, got {}", g.expected, g.found);
        }
        if let Some(pair) = pair {
            out.write(&PoseRecord::from_pose(&pair.intermediate, Some(kind::INTERMEDIATE)))?;
            out.write(&PoseRecord::from_pose(&pair.refined, Some(kind::REFINED)))?;
        }
    }
    out.finish()
}

fn ik(a: &IkArgs) -> Result<()> {
    let rig = match &a.rig {
        Some(p) => read_rig(p)?,
        None => Rig::h36m_default(),
    };
    let mut solver = RigSolver::new(rig, IkConfig { tol: a.tol, max_iter: a.max_iter })?;
    let names: Vec<String> = solver.rig().chains.iter().map(|c| c.name.clone()).collect();
    let mut out = JsonlWriter::create(&a.out)?;
    for (rec, pose) in read_poses(&a.poses, a.fps)? {
        let sol = solver.solve(&pose)?;
        let mut r = IkRecord::new(pose.frame_index, pose.timestamp, &sol, names.clone());
        r.kind = rec.kind;
        out.write(&r)?;
    }
    out.finish()
}

fn muscle(a: &MuscleArgs) -> Result<()> {
    let mut map = match &a.map {
        Some(p) => read_muscle_map(p)?,
        None => MuscleMap::default(),
    };
    map.thresholds = Thresholds { slow: a.slow, intense: a.intense };
    map.validate()?;
    let mut out = JsonlWriter::create(&a.out)?;
    let mut prev: Option<Pose3D> = None;
    for (rec, pose) in read_poses(&a.poses, a.fps)? {
        if let Some(p) = &prev {
            let dt = a.dt.unwrap_or(pose.timestamp - p.timestamp);
            let mut r = MuscleRecord::from(&muscle_levels(p, &pose, &map, dt)?);
            r.kind = rec.kind;
            out.write(&r)?;
        }
        prev = Some(pose);
    }
    out.finish()
}

fn eval(a: &EvalArgs) -> Result<()> {
    if a.pred.len() != a.gt.len() {
        return Err(Error::Config(format!("{} --pred files but {} --gt files", a.pred.len(), a.gt.len())));
    }
    if !a.label.is_empty() && a.label.len() != a.pred.len() {
        return Err(Error::Config(format!("{} labels for {} sequences", a.label.len(), a.pred.len())));
    }
    let mut sequences = Vec::with_capacity(a.pred.len());
    for (i, (pred_path, gt_path)) in a.pred.iter().zip(&a.gt).enumerate() {
        let gt: BTreeMap<u64, Pose3D> =
            read_poses(gt_path, a.fps)?.into_iter().map(|(_, p)| (p.frame_index, p)).collect();
        let (mut pred, mut matched) = (Vec::new(), Vec::new());
        for (_, p) in read_poses(pred_path, a.fps)? {
            match gt.get(&p.frame_index) {
                Some(g) => {
                    matched.push(g.clone());
                    pred.push(p);
                }
                None => log::warn!("{}: frame {} has no ground truth", pred_path.display(), p.frame_index),
            }
        }
        let label = a.label.get(i).cloned().unwrap_or_else(|| {
            pred_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("seq{i}"))
        });
        sequences.push(LabeledSequence { label, pred, gt: matched });
    }
    let report = evaluate(&sequences)?;
    let avg = report.action_average();
    let json = serde_json::json!({
        "mean_mpjpe_mm": report.mean_mpjpe,
        "mean_p_mpjpe_mm": report.mean_p_mpjpe,
        "accel_error": report.accel_error,
        "frames": report.per_frame_mpjpe.len(),
        "actions": report.actions.iter().map(|r| serde_json::json!({
            "label": r.label, "frames": r.frames, "mpjpe_mm": r.mpjpe, "p_mpjpe_mm": r.p_mpjpe,
        })).collect::<Vec<_>>(),
        "avg": avg.map(|(m, p)| serde_json::json!({"mpjpe_mm": m, "p_mpjpe_mm": p})),
        "per_frame_mpjpe_mm": report.per_frame_mpjpe,
        "per_frame_p_mpjpe_mm": report.per_frame_p_mpjpe,
    });
    match &a.report {
        Some(p) => write_json(p, &json)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "mpjpe {:.4} mm, p-mpjpe {:.4} mm", report.mean_mpjpe, report.mean_p_mpjpe);
        }
    }
    if let Some(p) = &a.table {
        let mut csv = String::from("action,frames,mpjpe_mm,p_mpjpe_mm\n");
        for r in &report.actions {
            csv += &format!("{},{},{},{}\n", r.label, r.frames, r.mpjpe, r.p_mpjpe);
        }
        if let Some((m, pm)) = avg {
            csv += &format!("Avg,{},{m},{pm}\n", report.per_frame_mpjpe.len());
        }
        write_text(p, &csv)?;
    }
    Ok(())
}
