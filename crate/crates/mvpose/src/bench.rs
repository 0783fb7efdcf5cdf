//! Per-stage latency benchmark over recorded pipeline inputs.

use serde::Serialize;

use crate::pipeline::{run_pipeline, FrameTiming, NullSink, PipelineConfig, PipelineSummary, RunOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageStats {
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
}

impl StageStats {
    /// Nearest-rank percentiles over `samples` (milliseconds).
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self { mean: 0.0, median: 0.0, p99: 0.0 };
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Self { mean: s.iter().sum::<f64>() / s.len() as f64, median: rank(0.5), p99: rank(0.99) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub stage: &'static str,
    #[serde(flatten)]
    pub stats: StageStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageLatencyReport {
    /// `file-replay` or `paced-replay`.
    pub mode: String,
    pub cameras: usize,
    pub frames: usize,
    pub repetitions: usize,
    pub stages: Vec<StageRow>,
    /// Sum of the stage means, ms per frame.
    pub total_ms: f64,
    pub fps_without_refiner: f64,
    /// Two output poses per input frame.
    pub fps_with_refiner: f64,
    /// Emitted pose records per second of wall time, refiner off and on.
    pub measured_pose_rate_without: f64,
    pub measured_pose_rate_with: f64,
}

impl StageLatencyReport {
    pub fn max_stage_mean(&self) -> f64 {
        self.stages.iter().map(|r| r.stats.mean).fold(0.0, f64::max)
    }

    /// Plain-text table with one row per stage.
    pub fn table(&self) -> String {
        let mut out = format!(
            "mode {} | cameras {} | frames {} x {}\n{:<18}{:>10}{:>10}{:>10}\n",
            self.mode, self.cameras, self.frames, self.repetitions, "stage", "mean", "median", "p99"
        );
        for r in &self.stages {
            out += &format!("{:<18}{:>10.4}{:>10.4}{:>10.4}\n", r.stage, r.stats.mean, r.stats.median, r.stats.p99);
        }
        out += &format!("{:<18}{:>10.4}\n", "total", self.total_ms);
        out += &format!(
            "fps without refiner {:.1}, with refiner {:.1}\n",
            self.fps_without_refiner, self.fps_with_refiner
        );
        out
    }
}

fn pose_rate(s: &PipelineSummary) -> f64 {
    let secs = s.wall.as_secs_f64();
    if secs > 0.0 {
        s.pose_records as f64 / secs
    } else {
        0.0
    }
}

/// Runs the pipeline `repetitions` times with the refiner off and on,
/// discarding records. Stage latencies come from the refiner-on runs.
pub fn bench(cfg: &PipelineConfig, repetitions: usize, opts: RunOptions) -> Result<StageLatencyReport> {
    if repetitions == 0 {
        return Err(Error::Bench("repetitions must be positive".into()));
    }
    let mut off = cfg.clone();
    off.refiner.enabled = false;
    let mut on = cfg.clone();
    on.refiner.enabled = true;

    let mut timings: Vec<FrameTiming> = Vec::new();
    let (mut rate_off, mut rate_on) = (0.0, 0.0);
    let mut frames = 0;
    for _ in 0..repetitions {
        let s = run_pipeline(&off, opts, &mut NullSink::default())?;
        if s.frames_seen == 0 {
            return Err(Error::Bench("input contains no frames".into()));
        }
        frames = s.frames_seen;
        rate_off += pose_rate(&s);
        let s = run_pipeline(&on, opts, &mut NullSink::default())?;
        rate_on += pose_rate(&s);
        timings.extend(s.timings);
    }

    let stages: Vec<StageRow> = FrameTiming::STAGES
        .iter()
        .enumerate()
        .map(|(i, &stage)| {
            let samples: Vec<f64> = timings.iter().map(|t| t.values()[i]).collect();
            StageRow { stage, stats: StageStats::from_samples(&samples) }
        })
        .collect();
    let total_ms: f64 = stages.iter().map(|r| r.stats.mean).sum();
    let without_refine = total_ms - stages[6].stats.mean;
    let fps_without_refiner = if without_refine > 0.0 { 1e3 / without_refine } else { f64::INFINITY };
    Ok(StageLatencyReport {
        mode: if opts.pace_fps.is_some() { "paced-replay" } else { "file-replay" }.into(),
        cameras: cfg.inputs.len(),
        frames,
        repetitions,
        stages,
        total_ms,
        fps_without_refiner,
        fps_with_refiner: 2.0 * fps_without_refiner,
        measured_pose_rate_without: rate_off / repetitions as f64,
        measured_pose_rate_with: rate_on / repetitions as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let st = StageStats::from_samples(&s);
        assert_eq!(st.mean, 50.5);
        assert_eq!(st.median, 50.0);
        assert_eq!(st.p99, 99.0);
        assert_eq!(StageStats::from_samples(&[3.0]).p99, 3.0);
    }
}
