use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::{Pose3D, NUM_JOINTS};

/// Frames per window: the current frame plus the eight before it.
pub const WINDOW: usize = 9;
/// Channels per pose: 17 joints times 3 axes.
pub const CHANNELS: usize = NUM_JOINTS * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    pub expected: u64,
    pub found: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PushOutcome {
    pub ready: bool,
    /// Set when the pushed frame did not follow the previous one; the buffer
    /// was restarted from the pushed frame.
    pub gap: Option<Gap>,
}

/// Causal ring buffer of the most recent [`WINDOW`] poses, contiguous in
/// frame index. Nothing after the current frame is ever held.
#[derive(Debug, Clone, Default)]
pub struct PoseWindow {
    frames: VecDeque<Pose3D>,
}

impl PoseWindow {
    pub fn new() -> Self {
        Self { frames: VecDeque::with_capacity(WINDOW) }
    }

    pub fn push(&mut self, pose: Pose3D) -> PushOutcome {
        let mut gap = None;
        if let Some(last) = self.frames.back() {
            let expected = last.frame_index + 1;
            if pose.frame_index != expected {
                gap = Some(Gap { expected, found: pose.frame_index });
                self.frames.clear();
            }
        }
        if self.frames.len() == WINDOW {
            self.frames.pop_front();
        }
        self.frames.push_back(pose);
        PushOutcome { ready: self.is_ready(), gap }
    }

    pub fn is_ready(&self) -> bool {
        self.frames.len() == WINDOW
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn frames(&self) -> impl Iterator<Item = &Pose3D> {
        self.frames.iter()
    }

    pub fn current(&self) -> Option<&Pose3D> {
        self.frames.back()
    }

    pub fn previous(&self) -> Option<&Pose3D> {
        self.frames.len().checked_sub(2).and_then(|i| self.frames.get(i))
    }

    /// Per-channel time series, oldest first; channel `3 * joint + axis`.
    /// Returns `None` until the window is full.
    pub fn channel_windows(&self) -> Option<Vec<[f64; WINDOW]>> {
        if !self.is_ready() {
            return None;
        }
        let mut out = alloc::vec![[0.0; WINDOW]; CHANNELS];
        for (t, pose) in self.frames.iter().enumerate() {
            for j in 0..NUM_JOINTS.min(pose.joints.len()) {
                for a in 0..3 {
                    out[3 * j + a][t] = pose.joints[j][a];
                }
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(i: u64) -> Pose3D {
        Pose3D::zeros(i, i as f64 * 0.02)
    }

    #[test]
    fn ready_after_nine_frames() {
        let mut w = PoseWindow::new();
        for i in 0..8 {
            assert!(!w.push(frame(i)).ready);
        }
        let out = w.push(frame(8));
        assert!(out.ready && out.gap.is_none());
        assert!(w.push(frame(9)).ready);
        assert_eq!(w.len(), WINDOW);
        assert_eq!(w.frames().next().unwrap().frame_index, 1);
    }

    #[test]
    fn gap_restarts_buffer() {
        let mut w = PoseWindow::new();
        for i in 0..9 {
            w.push(frame(i));
        }
        let out = w.push(frame(12));
        assert_eq!(out.gap, Some(Gap { expected: 9, found: 12 }));
        assert!(!out.ready);
        assert_eq!(w.len(), 1);
    }
}
