//! Single-subject tracking over per-frame detection boxes.
//!
//! The previous target box is compared by IoU with every detection. One
//! box above the gate, or a clear IoU winner, is taken directly without any
//! appearance work. Ambiguous frames (several close candidates, or none)
//! fall back to color-histogram similarity against the remembered
//! appearance of the subject.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Result};

pub const BINS: usize = 8;
const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Self {
        Self { x1, y1, x2, y2, score }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2, self.score].iter().all(|v| v.is_finite());
        if !finite || self.x2 <= self.x1 || self.y2 <= self.y1 || !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidBox { x1: self.x1, y1: self.y1, x2: self.x2, y2: self.y2, score: self.score });
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Packed RGB8 pixels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbPatch {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbPatch {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let p = Self { width, height, data };
        p.validate()?;
        Ok(p)
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let data = rgb.iter().copied().cycle().take(n * 3).collect();
        Self { width, height, data }
    }

    fn validate(&self) -> Result<()> {
        let n = self.width as usize * self.height as usize;
        if n == 0 {
            return Err(Error::InvalidPatch(alloc::format!("empty patch {}x{}", self.width, self.height)));
        }
        if self.data.len() != n * 3 {
            return Err(Error::InvalidPatch(alloc::format!(
                "expected {} bytes for {}x{} RGB8, got {}",
                n * 3,
                self.width,
                self.height,
                self.data.len()
            )));
        }
        Ok(())
    }
}

/// Per-channel 8-bin histogram, each channel L1-normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorDescriptor {
    pub histogram: [[f64; BINS]; CHANNELS],
}

impl ColorDescriptor {
    /// Convex blend `(1 - w) * self + w * other`; stays L1-normalized.
    pub fn blend(&self, other: &Self, w: f64) -> Self {
        let mut histogram = self.histogram;
        for (c, ch) in histogram.iter_mut().enumerate() {
            for (b, v) in ch.iter_mut().enumerate() {
                *v = (1.0 - w) * *v + w * other.histogram[c][b];
            }
        }
        Self { histogram }
    }
}

pub fn color_descriptor(patch: &RgbPatch) -> Result<ColorDescriptor> {
    patch.validate()?;
    let mut counts = [[0u64; BINS]; CHANNELS];
    for px in patch.data.chunks_exact(3) {
        for (c, &v) in px.iter().enumerate() {
            counts[c][(v as usize * BINS) / 256] += 1;
        }
    }
    let total = (patch.data.len() / 3) as f64;
    let mut histogram = [[0.0; BINS]; CHANNELS];
    for c in 0..CHANNELS {
        for b in 0..BINS {
            histogram[c][b] = counts[c][b] as f64 / total;
        }
    }
    Ok(ColorDescriptor { histogram })
}

/// Mean over channels of the histogram intersection `sum_i min(a_i, b_i)`.
pub fn descriptor_similarity(a: &ColorDescriptor, b: &ColorDescriptor) -> f64 {
    let mut total = 0.0;
    for c in 0..CHANNELS {
        total += a.histogram[c].iter().zip(&b.histogram[c]).map(|(x, y)| x.min(*y)).sum::<f64>();
    }
    (total / CHANNELS as f64).clamp(0.0, 1.0)
}

/// Similarity over histograms given as flat slices; rejects layout mismatch.
pub fn similarity_from_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != BINS * CHANNELS {
        return Err(Error::DescriptorLayout);
    }
    let mut da = ColorDescriptor { histogram: [[0.0; BINS]; CHANNELS] };
    let mut db = da;
    for i in 0..BINS * CHANNELS {
        da.histogram[i / BINS][i % BINS] = a[i];
        db.histogram[i / BINS][i % BINS] = b[i];
    }
    Ok(descriptor_similarity(&da, &db))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Candidate gate; a box is a candidate iff IoU with the last target is strictly greater.
    pub iou_gate: f64,
    /// Minimum top-1 minus top-2 IoU gap that lets IoU decide among several candidates.
    pub tie_margin: f64,
    /// Weight of the newly selected appearance when updating the reference after a color decision.
    pub descriptor_blend: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { iou_gate: 0.2, tie_margin: 0.3, descriptor_blend: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Single,
    IoUWin,
    ColorFallback,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Single => "single",
            Decision::IoUWin => "iou_win",
            Decision::ColorFallback => "color_fallback",
        }
    }
}

/// What the tracker remembers about the subject between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub last_box: BBox,
    /// Reference appearance used by the color fallback.
    pub last_descriptor: Option<ColorDescriptor>,
    /// Pixels of the last box chosen by IoU. Its descriptor is computed only
    /// if a later frame needs the color fallback, and then replaces
    /// `last_descriptor`.
    pub pending_patch: Option<RgbPatch>,
    pub frames_tracked: u64,
    /// Instrumentation: total color descriptors computed so far.
    pub descriptor_evaluations: u64,
}

impl TrackState {
    pub fn new(initial: BBox) -> Result<Self> {
        initial.validate()?;
        Ok(Self {
            last_box: initial,
            last_descriptor: None,
            pending_patch: None,
            frames_tracked: 0,
            descriptor_evaluations: 0,
        })
    }

    pub fn with_descriptor(mut self, d: ColorDescriptor) -> Self {
        self.last_descriptor = Some(d);
        self
    }

    pub fn with_patch(mut self, patch: RgbPatch) -> Self {
        self.pending_patch = Some(patch);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackStep {
    /// Index of the selected box in the input list.
    pub index: usize,
    pub selected: BBox,
    pub decision: Decision,
    pub state: TrackState,
}

fn by_score_then_index(boxes: &[BBox], a: usize, b: usize) -> Ordering {
    boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b))
}

/// One tracking decision. Pure: the input state is left untouched and the
/// updated state is returned in the step.
pub fn track_step(
    state: &TrackState,
    boxes: &[BBox],
    patches: Option<&[RgbPatch]>,
    cfg: &TrackerConfig,
) -> Result<TrackStep> {
    if boxes.is_empty() {
        return Err(Error::NoDetections);
    }
    for b in boxes {
        b.validate()?;
    }
    if let Some(p) = patches {
        if p.len() != boxes.len() {
            return Err(Error::InvalidPatch(alloc::format!("{} patches for {} boxes", p.len(), boxes.len())));
        }
    }

    let iou_pick = if boxes.len() == 1 {
        Some((0, Decision::Single))
    } else {
        let mut candidates: Vec<(usize, f64)> = Vec::with_capacity(boxes.len());
        for (i, b) in boxes.iter().enumerate() {
            let v = iou(&state.last_box, b)?;
            if v > cfg.iou_gate {
                candidates.push((i, v));
            }
        }
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| by_score_then_index(boxes, a.0, b.0)));
        match candidates.as_slice() {
            [only] => Some((only.0, Decision::IoUWin)),
            [top, second, ..] if top.1 - second.1 >= cfg.tie_margin => Some((top.0, Decision::IoUWin)),
            _ => None,
        }
    };

    let mut next = state.clone();
    next.frames_tracked += 1;

    if let Some((index, decision)) = iou_pick {
        next.last_box = boxes[index];
        if let Some(p) = patches {
            next.pending_patch = Some(p[index].clone());
        }
        return Ok(TrackStep { index, selected: boxes[index], decision, state: next });
    }

    let patches = patches.ok_or(Error::TrackingLost)?;
    let reference = match next.pending_patch.take() {
        Some(p) => {
            next.descriptor_evaluations += 1;
            color_descriptor(&p)?
        }
        None => next.last_descriptor.ok_or(Error::TrackingLost)?,
    };

    let mut best: Option<(usize, f64, ColorDescriptor)> = None;
    for (i, p) in patches.iter().enumerate() {
        let d = color_descriptor(p)?;
        next.descriptor_evaluations += 1;
        let s = descriptor_similarity(&reference, &d);
        let better = match &best {
            None => true,
            Some((j, bs, _)) => s > *bs || (s == *bs && by_score_then_index(boxes, i, *j) == Ordering::Less),
        };
        if better {
            best = Some((i, s, d));
        }
    }
    let (index, _, desc) = best.ok_or(Error::NoDetections)?;
    next.last_box = boxes[index];
    next.last_descriptor = Some(reference.blend(&desc, cfg.descriptor_blend));
    Ok(TrackStep { index, selected: boxes[index], decision: Decision::ColorFallback, state: next })
}
