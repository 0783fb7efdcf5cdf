//! Detection boxes and appearance patches for tracker scenarios.

use std::str::FromStr;

use mvpose_core::camera::CameraView;
use mvpose_core::tracker::{BBox, RgbPatch};
use mvpose_core::Pose3D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthScene;
use crate::{Error, Result};

pub const SUBJECT: &str = "subject";
pub const DISTRACTOR: &str = "distractor";

const PAD: f64 = 0.10;
const SUBJECT_SCORE: f64 = 0.95;
const DISTRACTOR_SCORE: f64 = 0.9;
const PATCH_SIDE: u32 = 8;
const SUBJECT_RGB: [f64; 3] = [190.0, 60.0, 50.0];
const DISTRACTOR_RGB: [f64; 3] = [50.0, 90.0, 190.0];
const DETECTION_STREAM: u64 = 0x6465_7465_6374_2121;

/// Which branch of the tracker decision tree the boxes exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Only the subject is detected.
    Single,
    /// A distractor far from the subject: one IoU candidate.
    IouWin,
    /// A distractor sweeps across the subject: near-equal IoU candidates.
    Crossing,
    /// The subject box jumps halfway through: no IoU candidate.
    Teleport,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Single, Scenario::IouWin, Scenario::Crossing, Scenario::Teleport];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Single => "single",
            Scenario::IouWin => "iou_win",
            Scenario::Crossing => "crossing",
            Scenario::Teleport => "teleport",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}` (single, iou_win, crossing, teleport)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame: u64,
    pub boxes: Vec<BBox>,
    pub identities: Vec<&'static str>,
    pub patches: Vec<RgbPatch>,
}

impl DetectionFrame {
    pub fn subject_index(&self) -> Option<usize> {
        self.identities.iter().position(|i| *i == SUBJECT)
    }
}

/// Bounding rectangle of the projected joints, padded by 10% of its size on
/// every side. Joints behind the camera are ignored.
pub fn subject_box(cam: &CameraView, pose: &Pose3D) -> Result<BBox> {
    let pts: Vec<_> = pose.joints.iter().filter_map(|j| cam.project(j).ok()).collect();
    if pts.is_empty() {
        return Err(Error::Config(format!("subject not visible in camera {}", cam.id)));
    }
    let (mut x1, mut y1, mut x2, mut y2) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &pts {
        x1 = x1.min(p.x);
        y1 = y1.min(p.y);
        x2 = x2.max(p.x);
        y2 = y2.max(p.y);
    }
    let (px, py) = (PAD * (x2 - x1).max(1.0), PAD * (y2 - y1).max(1.0));
    Ok(BBox::new(x1 - px, y1 - py, x2 + px, y2 + py, SUBJECT_SCORE))
}

fn shifted(b: &BBox, dx: f64, dy: f64, score: f64) -> BBox {
    BBox::new(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy, score)
}

fn patch(rng: &mut ChaCha8Rng, base: [f64; 3]) -> RgbPatch {
    let n = (PATCH_SIDE * PATCH_SIDE) as usize;
    let mut data = Vec::with_capacity(3 * n);
    for _ in 0..n {
        for c in base {
            data.push((c + rng.random_range(-20.0..20.0)).clamp(0.0, 255.0) as u8);
        }
    }
    RgbPatch { width: PATCH_SIDE, height: PATCH_SIDE, data }
}

/// Per-camera detection frames for `scenario`. Box order within a frame is
/// shuffled so the subject is not always first.
pub fn synth_detections(scene: &SynthScene, scenario: Scenario) -> Result<Vec<Vec<DetectionFrame>>> {
    let n = scene.gt.len();
    let mut out = Vec::with_capacity(scene.cameras.len());
    for (ci, cam) in scene.cameras.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ DETECTION_STREAM);
        rng.set_stream(ci as u64);
        let jitter = |rng: &mut ChaCha8Rng, c: [f64; 3]| c.map(|v| v + rng.random_range(-15.0..15.0));
        let subject_rgb = jitter(&mut rng, SUBJECT_RGB);
        let distractor_rgb = jitter(&mut rng, DISTRACTOR_RGB);
        let first = subject_box(cam, &scene.gt[0])?;
        let (w0, h0) = (first.width(), first.height());
        let teleport_at = n / 2;

        let mut frames = Vec::with_capacity(n);
        for (f, pose) in scene.gt.iter().enumerate() {
            let mut subject = subject_box(cam, pose)?;
            let mut boxes = Vec::new();
            match scenario {
                Scenario::Single => {}
                Scenario::IouWin => boxes.push(shifted(&subject, 2.0 * w0, 0.0, DISTRACTOR_SCORE)),
                Scenario::Crossing => {
                    let u = if n > 1 { f as f64 / (n - 1) as f64 } else { 0.5 };
                    boxes.push(shifted(&subject, w0 * (-2.5 + 5.0 * u), 0.05 * h0, DISTRACTOR_SCORE));
                }
                Scenario::Teleport => {
                    if f >= teleport_at {
                        subject = shifted(&subject, 3.0 * w0, 0.0, SUBJECT_SCORE);
                    }
                    boxes.push(shifted(&first, -2.0 * w0, 0.0, DISTRACTOR_SCORE));
                }
            }
            let mut items: Vec<(BBox, &'static str, RgbPatch)> = vec![(subject, SUBJECT, patch(&mut rng, subject_rgb))];
            for b in boxes {
                items.push((b, DISTRACTOR, patch(&mut rng, distractor_rgb)));
            }
            if items.len() > 1 && rng.random::<bool>() {
                items.reverse();
            }
            let mut frame =
                DetectionFrame { frame: pose.frame_index, boxes: vec![], identities: vec![], patches: vec![] };
            for (b, id, p) in items {
                frame.boxes.push(b);
                frame.identities.push(id);
                frame.patches.push(p);
            }
            frames.push(frame);
        }
        out.push(frames);
    }
    Ok(out)
}
