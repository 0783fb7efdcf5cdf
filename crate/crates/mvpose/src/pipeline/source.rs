//! Per-camera input readers: keypoint or heatmap stream plus aligned
//! detections.

use std::fs::File;
use std::io::BufReader;
use std::iter::Peekable;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mvpose_core::heatmap::Heatmap;
use mvpose_core::tracker::RgbPatch;
use mvpose_core::Pose2D;

use super::config::CameraInput;
use super::ms_since;
use crate::io::{read_patches, DetectionRecord, HeatmapReader, JsonlReader, KeypointRecord};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Detections {
    pub record: DetectionRecord,
    pub patches: Option<Vec<RgbPatch>>,
}

/// Everything one camera contributes to one frame, before processing.
#[derive(Debug, Clone)]
pub struct CameraFrameInput {
    pub frame: u64,
    pub keypoints: Option<Pose2D>,
    pub heatmap: Option<Heatmap>,
    pub detections: Option<Detections>,
    /// Reading and parsing the keypoint or heatmap record, ms.
    pub ingest_ms: f64,
    /// Reading the detection record and its patches, ms.
    pub detection_ms: f64,
}

enum Primary {
    Keypoints(JsonlReader<KeypointRecord>),
    Heatmaps(HeatmapReader<BufReader<File>>),
}

struct DetectionCursor {
    path: PathBuf,
    records: Peekable<JsonlReader<DetectionRecord>>,
}

impl DetectionCursor {
    /// Detections for `frame`; earlier unmatched records are skipped.
    fn take(&mut self, frame: u64) -> Result<Option<Detections>> {
        loop {
            match self.records.peek() {
                None => return Ok(None),
                Some(Err(_)) => return Err(self.records.next().expect("peeked").unwrap_err()),
                Some(Ok(r)) if r.frame < frame => {
                    log::debug!("{}: detections for frame {} have no keypoints, skipped", self.path.display(), r.frame);
                    self.records.next();
                }
                Some(Ok(r)) if r.frame > frame => return Ok(None),
                Some(Ok(_)) => {
                    let record = self.records.next().expect("peeked")?;
                    let patches = match &record.patches {
                        Some(name) => {
                            let base = self.path.parent().unwrap_or(Path::new("."));
                            let offset = record.patch_offset.unwrap_or(0);
                            Some(read_patches(base.join(name), offset, record.boxes.len())?)
                        }
                        None => None,
                    };
                    return Ok(Some(Detections { record, patches }));
                }
            }
        }
    }
}

pub struct CameraSource {
    cam: String,
    primary: Primary,
    detections: Option<DetectionCursor>,
    last_frame: Option<u64>,
    finished: bool,
}

impl CameraSource {
    pub fn open(input: &CameraInput) -> Result<Self> {
        let primary = match (&input.heatmaps, &input.keypoints) {
            (Some(h), _) => Primary::Heatmaps(HeatmapReader::open(h)?),
            (None, Some(k)) => Primary::Keypoints(JsonlReader::open(k)?),
            (None, None) => {
                return Err(Error::Config(format!("camera {} has no keypoint or heatmap input", input.cam)))
            }
        };
        let detections = match &input.detections {
            Some(p) => Some(DetectionCursor { path: p.clone(), records: JsonlReader::open(p)?.peekable() }),
            None => None,
        };
        Ok(Self { cam: input.cam.clone(), primary, detections, last_frame: None, finished: false })
    }

    pub fn camera(&self) -> &str {
        &self.cam
    }

    fn next_frame(&mut self) -> Option<Result<CameraFrameInput>> {
        let start = Instant::now();
        let (frame, keypoints, heatmap) = match &mut self.primary {
            Primary::Keypoints(r) => match r.next()? {
                Ok(rec) => {
                    if rec.cam != self.cam {
                        return Some(Err(Error::Config(format!(
                            "keypoint record for camera {} in the input of camera {}",
                            rec.cam, self.cam
                        ))));
                    }
                    match rec.to_pose() {
                        Ok(p) => (rec.frame, Some(p), None),
                        Err(e) => return Some(Err(e)),
                    }
                }
                Err(e) => return Some(Err(e)),
            },
            Primary::Heatmaps(r) => match r.next()? {
                Ok((frame, hm)) => (frame, None, Some(hm)),
                Err(e) => return Some(Err(e)),
            },
        };
        let ingest_ms = ms_since(start);
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Some(Err(mvpose_core::Error::Synchronization { expected: last + 1, found: frame }.into()));
            }
        }
        self.last_frame = Some(frame);
        let start = Instant::now();
        let detections = match self.detections.as_mut().map(|d| d.take(frame)).transpose() {
            Ok(d) => d.flatten(),
            Err(e) => return Some(Err(e)),
        };
        let detection_ms = ms_since(start);
        Some(Ok(CameraFrameInput { frame, keypoints, heatmap, detections, ingest_ms, detection_ms }))
    }
}

impl Iterator for CameraSource {
    type Item = Result<CameraFrameInput>;

    /// A stream cut off inside its last record ends there with a warning.
    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.next_frame() {
            Some(Err(e)) if e.is_truncation() => {
                log::warn!("camera {}: {e}; input ends here", self.cam);
                self.finished = true;
                None
            }
            other => other,
        }
    }
}
