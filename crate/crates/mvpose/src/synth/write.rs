//! Writes a synthetic scene as pipeline input files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::{observe, synth_detections, SynthScene};
use crate::io::{
    kind, write_cameras, write_json, write_patches, BoxRecord, DetectionRecord, HeatmapHeader, HeatmapWriter,
    JsonlWriter, KeypointRecord, PoseRecord,
};
use crate::pipeline::{CameraInput, PipelineConfig};
use crate::{Error, Result};

/// Paths written by [`write_scene`], relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFiles {
    pub dir: PathBuf,
    pub cameras: PathBuf,
    pub ground_truth: PathBuf,
    pub pipeline: PathBuf,
    pub inputs: Vec<CameraInput>,
}

/// Emits cameras, ground truth, per-camera keypoints, detections with patch
/// files, optional heatmap streams and a matching `pipeline.json`.
pub fn write_scene(scene: &SynthScene, dir: impl AsRef<Path>) -> Result<SceneFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_cameras(dir.join("cameras.json"), &scene.cameras)?;

    let mut gt = JsonlWriter::create(dir.join("gt.jsonl"))?;
    for p in &scene.gt {
        gt.write(&PoseRecord::from_pose(p, Some(kind::GROUND_TRUTH)))?;
    }
    gt.finish()?;

    let observations = observe(scene)?;
    let detections = synth_detections(scene, scene.scenario)?;
    let mut inputs = Vec::new();
    for ((cam, obs), dets) in scene.cameras.iter().zip(&observations).zip(&detections) {
        let kp_name = format!("keypoints_{}.jsonl", cam.id);
        let mut kp = JsonlWriter::create(dir.join(&kp_name))?;
        for pose in &obs.keypoints {
            kp.write(&KeypointRecord::from_pose(pose))?;
        }
        kp.finish()?;

        let det_name = format!("detections_{}.jsonl", cam.id);
        let patch_name = format!("patches_{}.bin", cam.id);
        let patch_path = dir.join(&patch_name);
        let mut patches = BufWriter::new(File::create(&patch_path).map_err(|e| Error::io(&patch_path, e))?);
        let mut det = JsonlWriter::create(dir.join(&det_name))?;
        let mut offset = 0;
        for f in dets {
            let boxes = f
                .boxes
                .iter()
                .zip(&f.identities)
                .map(|(b, id)| {
                    let mut r = BoxRecord::from_bbox(b);
                    r.extra.insert("identity".into(), Value::from(*id));
                    r
                })
                .collect();
            det.write(&DetectionRecord {
                frame: f.frame,
                cam: cam.id.clone(),
                boxes,
                patches: Some(patch_name.clone()),
                patch_offset: Some(offset),
                extra: Default::default(),
            })?;
            offset += write_patches(&mut patches, &f.patches).map_err(|e| Error::io(&patch_path, e))?;
        }
        det.finish()?;
        patches.flush().map_err(|e| Error::io(&patch_path, e))?;

        let mut heat_name = None;
        if let (Some(frames), Some(hcfg)) = (&obs.heatmaps, &scene.noise.heatmaps) {
            let name = format!("heatmaps_{}.rphm", cam.id);
            let header = HeatmapHeader {
                joints: mvpose_core::NUM_JOINTS as u32,
                width: hcfg.width as u32,
                height: hcfg.height as u32,
                normalized: false,
            };
            let mut w = HeatmapWriter::create(dir.join(&name), header)?;
            for f in frames {
                w.write_frame(f.frame, &f.heatmap)?;
            }
            w.finish()?;
            heat_name = Some(PathBuf::from(name));
        }
        inputs.push(CameraInput {
            cam: cam.id.clone(),
            keypoints: Some(kp_name.into()),
            detections: Some(det_name.into()),
            heatmaps: heat_name,
        });
    }

    let cfg = PipelineConfig {
        cameras: "cameras.json".into(),
        inputs: inputs.clone(),
        fps: scene.fps,
        seed: scene.seed,
        ..Default::default()
    };
    write_json(dir.join("pipeline.json"), &cfg)?;
    Ok(SceneFiles {
        dir: dir.to_path_buf(),
        cameras: "cameras.json".into(),
        ground_truth: "gt.jsonl".into(),
        pipeline: "pipeline.json".into(),
        inputs,
    })
}
