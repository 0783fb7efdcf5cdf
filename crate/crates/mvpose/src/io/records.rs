//! Typed JSON Lines records. Every record keeps fields it does not know in
//! `extra`, so parse followed by emit preserves them.

use std::collections::BTreeMap;

use mvpose_core::ik::RigSolution;
use mvpose_core::muscle::MuscleFrame;
use mvpose_core::tracker::{BBox, TrackStep};
use mvpose_core::{Error as CoreError, Pose2D, Pose3D, Vec2, Vec3, NUM_JOINTS};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Result;

pub type Extra = Map<String, Value>;

/// One camera's 2D keypoints for one frame: `[u, v, confidence]` per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointRecord {
    pub frame: u64,
    pub cam: String,
    pub joints: Vec<[f64; 3]>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl KeypointRecord {
    pub fn from_pose(pose: &Pose2D) -> Self {
        Self {
            frame: pose.frame_index,
            cam: pose.camera_id.clone(),
            joints: pose.joints.iter().zip(&pose.confidence).map(|(p, c)| [p.x, p.y, *c]).collect(),
            extra: Extra::new(),
        }
    }

    pub fn to_pose(&self) -> Result<Pose2D> {
        if self.joints.len() != NUM_JOINTS {
            return Err(CoreError::Topology { expected: NUM_JOINTS, found: self.joints.len() }.into());
        }
        Ok(Pose2D::new(
            self.joints.iter().map(|j| Vec2::new(j[0], j[1])).collect(),
            self.joints.iter().map(|j| j[2]).collect(),
            self.cam.clone(),
            self.frame,
        ))
    }
}

/// Kind tag of an emitted 3D pose.
pub mod kind {
    pub const MEASURED: &str = "measured";
    pub const REFINED: &str = "refined";
    pub const INTERMEDIATE: &str = "intermediate";
    pub const ENGINE: &str = "engine";
    pub const GROUND_TRUTH: &str = "ground_truth";
}

/// A 3D pose. `timestamp`, `kind` and `residual` are optional on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub joints: Vec<[f64; 3]>,
    pub conf: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<Vec<f64>>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl PoseRecord {
    pub fn from_pose(pose: &Pose3D, kind: Option<&str>) -> Self {
        Self {
            frame: pose.frame_index,
            timestamp: Some(pose.timestamp),
            kind: kind.map(Into::into),
            joints: pose.joints.iter().map(|p| [p.x, p.y, p.z]).collect(),
            conf: pose.confidence.clone(),
            residual: None,
            extra: Extra::new(),
        }
    }

    pub fn with_residual(mut self, residual: Vec<f64>) -> Self {
        self.residual = Some(residual);
        self
    }

    /// Missing timestamps are derived from the frame index at `fps`.
    pub fn to_pose(&self, fps: f64) -> Result<Pose3D> {
        if self.joints.len() != NUM_JOINTS || self.conf.len() != NUM_JOINTS {
            return Err(
                CoreError::Topology { expected: NUM_JOINTS, found: self.joints.len().min(self.conf.len()) }.into()
            );
        }
        Ok(Pose3D {
            joints: self.joints.iter().map(|j| Vec3::new(j[0], j[1], j[2])).collect(),
            confidence: self.conf.clone(),
            frame_index: self.frame,
            timestamp: self.timestamp.unwrap_or(self.frame as f64 / fps),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
    #[serde(flatten)]
    pub extra: Extra,
}

impl BoxRecord {
    pub fn from_bbox(b: &BBox) -> Self {
        Self { x1: b.x1, y1: b.y1, x2: b.x2, y2: b.y2, score: b.score, extra: Extra::new() }
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(self.x1, self.y1, self.x2, self.y2, self.score)
    }
}

/// Detection boxes of one camera for one frame. `patches` names a binary
/// patch file relative to the record file; `patch_offset` is the byte
/// offset of this frame's first patch in it (0 when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: u64,
    pub cam: String,
    pub boxes: Vec<BoxRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patches: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_offset: Option<u64>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: u64,
    pub cam: String,
    pub index: usize,
    pub decision: String,
    #[serde(rename = "box")]
    pub selected: BoxRecord,
}

impl TrackRecord {
    /// The selected input box is copied with its extra fields.
    pub fn new(det: &DetectionRecord, step: &TrackStep) -> Self {
        Self {
            frame: det.frame,
            cam: det.cam.clone(),
            index: step.index,
            decision: step.decision.as_str().into(),
            selected: det.boxes[step.index].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleEntry {
    pub speed: f64,
    pub level: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleRecord {
    pub frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub muscles: BTreeMap<String, MuscleEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl From<&MuscleFrame> for MuscleRecord {
    fn from(f: &MuscleFrame) -> Self {
        Self {
            frame: f.frame_index,
            kind: None,
            muscles: f
                .muscles
                .iter()
                .map(|m| {
                    let e = MuscleEntry {
                        speed: m.intensity.speed,
                        level: m.intensity.level.as_str().into(),
                        color: m.intensity.level.color().into(),
                    };
                    (m.name.clone(), e)
                })
                .collect(),
            warnings: f.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub name: String,
    pub status: String,
    pub iterations: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkRecord {
    pub frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub joints: Vec<[f64; 3]>,
    pub chains: Vec<ChainRecord>,
}

impl IkRecord {
    pub fn new(frame: u64, timestamp: f64, sol: &RigSolution, names: impl IntoIterator<Item = String>) -> Self {
        Self {
            frame,
            timestamp: Some(timestamp),
            kind: None,
            joints: sol.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            chains: names
                .into_iter()
                .zip(&sol.chains)
                .map(|(name, c)| ChainRecord {
                    name,
                    status: c.status.as_str().into(),
                    iterations: c.iterations,
                    error: c.error,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keypoint_line_parses_to_pose_and_keeps_unknown_fields() {
        let joints: Vec<String> = (0..17).map(|i| format!("[{i}.5, 2.0, 0.9]")).collect();
        let line = format!(r#"{{"frame": 7, "cam": "c1", "joints": [{}], "source": "unit"}}"#, joints.join(","));
        let rec: KeypointRecord = serde_json::from_str(&line).unwrap();
        let pose = rec.to_pose().unwrap();
        assert_eq!(pose.frame_index, 7);
        assert_eq!(pose.joints[3], Vec2::new(3.5, 2.0));
        assert_eq!(pose.confidence[16], 0.9);
        let back: KeypointRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.extra["source"], "unit");
    }

    #[test]
    fn pose_record_defaults_timestamp_from_fps() {
        let rec = PoseRecord::from_pose(&Pose3D::zeros(10, 0.0), None);
        let mut rec = rec;
        rec.timestamp = None;
        assert_eq!(rec.to_pose(50.0).unwrap().timestamp, 0.2);
        rec.joints.pop();
        assert!(rec.to_pose(50.0).is_err());
    }
}
