//! Causal temporal refinement with frame doubling.
//!
//! A [`PoseWindow`] holds the current pose and the eight before it. Each of
//! the 51 coordinate channels is passed through the same small residual
//! network ([`RefinerWeights`]), which emits two values: the refined current
//! coordinate and a coordinate for a frame halfway between the previous and
//! the current one. Every input frame after warm-up therefore yields two
//! output poses.

mod loss;
mod network;
mod train;
mod window;

pub use loss::{channel_loss, loss_total, VelocityForm};
pub use network::{
    BlockLayout, Centering, Layout, Preprocess, RefinerWeights, BLOCKS, DEFAULT_HIDDEN, LEAKY_SLOPE, OUTPUTS,
};
pub use train::{
    evaluate_loss, init_weights, loss_and_gradient, train, ChannelSample, RefinerHyperparams, TrainOutcome,
    TrainingSet, Trajectory, MIN_TRAJECTORY,
};
pub use window::{Gap, PoseWindow, PushOutcome, CHANNELS, WINDOW};

use alloc::vec::Vec;

use crate::{Error, Pose3D, Result, Vec3, NUM_JOINTS};

/// Refined current pose and the predicted in-between pose.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedPair {
    pub refined: Pose3D,
    pub intermediate: Pose3D,
}

impl RefinedPair {
    /// Both poses in emission order: intermediate first, then current.
    pub fn in_time_order(&self) -> [&Pose3D; 2] {
        [&self.intermediate, &self.refined]
    }
}

pub fn refine(window: &PoseWindow, weights: &RefinerWeights) -> Result<RefinedPair> {
    let channels = window
        .channel_windows()
        .ok_or_else(|| Error::Model(alloc::format!("window holds {} of {WINDOW} frames", window.len())))?;
    let (cur, prev) = match (window.current(), window.previous()) {
        (Some(c), Some(p)) => (c, p),
        _ => unreachable!("a full window has two frames"),
    };
    if window.frames().any(|p| p.joints.len() != NUM_JOINTS) {
        return Err(Error::Topology {
            expected: NUM_JOINTS,
            found: window.frames().map(|p| p.joints.len()).find(|&n| n != NUM_JOINTS).unwrap_or(0),
        });
    }
    let out = weights.forward_channels(&channels)?;
    let joints = |k: usize| -> Vec<Vec3> {
        (0..NUM_JOINTS).map(|j| Vec3::new(out[3 * j][k], out[3 * j + 1][k], out[3 * j + 2][k])).collect()
    };
    let refined = Pose3D {
        joints: joints(0),
        confidence: cur.confidence.clone(),
        frame_index: cur.frame_index,
        timestamp: cur.timestamp,
    };
    let intermediate = Pose3D {
        joints: joints(1),
        confidence: cur.confidence.iter().zip(&prev.confidence).map(|(a, b)| a.min(*b)).collect(),
        frame_index: cur.frame_index,
        timestamp: 0.5 * (prev.timestamp + cur.timestamp),
    };
    Ok(RefinedPair { refined, intermediate })
}

/// Streaming wrapper: push poses in frame order, get a pair per frame once
/// the window is full.
#[derive(Debug, Clone)]
pub struct TemporalRefiner {
    window: PoseWindow,
    weights: RefinerWeights,
}

impl TemporalRefiner {
    pub fn new(weights: RefinerWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self { window: PoseWindow::new(), weights })
    }

    pub fn weights(&self) -> &RefinerWeights {
        &self.weights
    }

    pub fn window(&self) -> &PoseWindow {
        &self.window
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }

    pub fn push(&mut self, pose: Pose3D) -> Result<(PushOutcome, Option<RefinedPair>)> {
        let outcome = self.window.push(pose);
        if !outcome.ready {
            return Ok((outcome, None));
        }
        Ok((outcome, Some(refine(&self.window, &self.weights)?)))
    }
}
