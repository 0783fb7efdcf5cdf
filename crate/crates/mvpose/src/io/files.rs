//! JSON files: cameras, skeleton, refiner weights, IK rig, muscle map and
//! engine-frame config.

use std::collections::BTreeMap;
use std::path::Path;

use mvpose_core::camera::{Axis, CameraView, EngineFrameConfig};
use mvpose_core::ik::{Rig, RigChain};
use mvpose_core::muscle::{Muscle, MuscleMap, Thresholds};
use mvpose_core::refiner::{Centering, Preprocess, RefinerWeights};
use mvpose_core::{Error as CoreError, Skeleton, Vec3};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::jsonl::{read_json, write_json};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub id: String,
    #[serde(rename = "K")]
    pub k: [f64; 9],
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl CameraEntry {
    pub fn from_view(c: &CameraView) -> Self {
        let row_major = |m: &Matrix3<f64>| {
            let mut out = [0.0; 9];
            for (i, v) in out.iter_mut().enumerate() {
                *v = m[(i / 3, i % 3)];
            }
            out
        };
        Self {
            id: c.id.clone(),
            k: row_major(&c.intrinsics),
            r: row_major(&c.rotation),
            t: [c.translation.x, c.translation.y, c.translation.z],
            width: c.width,
            height: c.height,
        }
    }

    pub fn to_view(&self) -> Result<CameraView> {
        Ok(CameraView::new(
            self.id.clone(),
            Matrix3::from_row_slice(&self.k),
            Matrix3::from_row_slice(&self.r),
            Vec3::from(self.t),
            self.width,
            self.height,
        )?)
    }
}

pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    let entries: Vec<CameraEntry> = read_json(&path)?;
    let cams: Vec<CameraView> = entries.iter().map(CameraEntry::to_view).collect::<Result<_>>()?;
    for (i, c) in cams.iter().enumerate() {
        if cams[..i].iter().any(|o| o.id == c.id) {
            return Err(CoreError::Calibration(format!("duplicate camera id {}", c.id)).into());
        }
    }
    Ok(cams)
}

pub fn write_cameras(path: impl AsRef<Path>, cams: &[CameraView]) -> Result<()> {
    write_json(path, &cams.iter().map(CameraEntry::from_view).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub joint_names: Vec<String>,
    pub parents: Vec<Option<usize>>,
}

pub fn read_skeleton(path: impl AsRef<Path>) -> Result<Skeleton> {
    let f: SkeletonFile = read_json(path)?;
    Ok(Skeleton::new(f.joint_names, f.parents)?)
}

pub fn write_skeleton(path: impl AsRef<Path>, s: &Skeleton) -> Result<()> {
    write_json(path, &SkeletonFile { joint_names: s.joint_names().to_vec(), parents: s.parents().to_vec() })
}

pub const WEIGHTS_FORMAT: &str = "mvpose-refiner";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    /// `[rows, cols]` for matrices, `[len]` for biases.
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringName {
    None,
    LastFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub format: String,
    pub version: u32,
    pub hidden: usize,
    pub window: usize,
    pub outputs: usize,
    pub centering: CenteringName,
    pub input_scale: f64,
    pub layers: Vec<LayerEntry>,
}

fn layer_table(hidden: usize) -> Vec<(String, Vec<usize>)> {
    use mvpose_core::refiner::{BLOCKS, OUTPUTS, WINDOW};
    let mut t = vec![("input.weight".into(), vec![hidden, WINDOW]), ("input.bias".into(), vec![hidden])];
    for b in 0..BLOCKS {
        for fc in 1..=2 {
            t.push((format!("block{b}.fc{fc}.weight"), vec![hidden, hidden]));
            t.push((format!("block{b}.fc{fc}.bias"), vec![hidden]));
        }
    }
    t.push(("output.weight".into(), vec![OUTPUTS, hidden]));
    t.push(("output.bias".into(), vec![OUTPUTS]));
    t
}

impl WeightsFile {
    pub fn from_weights(w: &RefinerWeights) -> Self {
        let mut offset = 0;
        let layers = layer_table(w.hidden)
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let values = w.params[offset..offset + n].to_vec();
                offset += n;
                LayerEntry { name, shape, values }
            })
            .collect();
        Self {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            hidden: w.hidden,
            window: mvpose_core::refiner::WINDOW,
            outputs: mvpose_core::refiner::OUTPUTS,
            centering: match w.preprocess.centering {
                Centering::None => CenteringName::None,
                Centering::LastFrame => CenteringName::LastFrame,
            },
            input_scale: w.preprocess.scale,
            layers,
        }
    }

    pub fn to_weights(&self) -> Result<RefinerWeights> {
        let model = |m: String| Error::Core(CoreError::Model(m));
        if self.format != WEIGHTS_FORMAT || self.version != WEIGHTS_VERSION {
            return Err(model(format!("unsupported weights format {} version {}", self.format, self.version)));
        }
        if self.window != mvpose_core::refiner::WINDOW || self.outputs != mvpose_core::refiner::OUTPUTS {
            return Err(model(format!("window {} / outputs {} must be 9 / 2", self.window, self.outputs)));
        }
        let table = layer_table(self.hidden);
        if table.len() != self.layers.len() {
            return Err(model(format!("{} layers, expected {}", self.layers.len(), table.len())));
        }
        let mut params = Vec::new();
        for ((name, shape), l) in table.iter().zip(&self.layers) {
            if *name != l.name || *shape != l.shape || l.values.len() != shape.iter().product::<usize>() {
                return Err(model(format!(
                    "layer {} with shape {:?} and {} values, expected {name} {shape:?}",
                    l.name,
                    l.shape,
                    l.values.len()
                )));
            }
            params.extend_from_slice(&l.values);
        }
        let centering = match self.centering {
            CenteringName::None => Centering::None,
            CenteringName::LastFrame => Centering::LastFrame,
        };
        let w = RefinerWeights {
            hidden: self.hidden,
            params,
            preprocess: Preprocess { centering, scale: self.input_scale },
        };
        w.validate()?;
        Ok(w)
    }
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<RefinerWeights> {
    read_json::<WeightsFile>(path)?.to_weights()
}

pub fn write_weights(path: impl AsRef<Path>, w: &RefinerWeights) -> Result<()> {
    write_json(path, &WeightsFile::from_weights(w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigChainEntry {
    pub name: String,
    pub joints: Vec<usize>,
    pub lengths: Vec<f64>,
    /// Cone half-angle in radians per joint; `null` for unconstrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigFile {
    pub chains: Vec<RigChainEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rest: Option<Vec<[f64; 3]>>,
}

impl RigFile {
    pub fn from_rig(rig: &Rig) -> Self {
        Self {
            chains: rig
                .chains
                .iter()
                .map(|c| RigChainEntry {
                    name: c.name.clone(),
                    joints: c.joints.clone(),
                    lengths: c.lengths.clone(),
                    limits: c.limits.clone(),
                })
                .collect(),
            rest: Some(rig.rest.iter().map(|p| [p.x, p.y, p.z]).collect()),
        }
    }

    pub fn to_rig(&self) -> Result<Rig> {
        let rest = match &self.rest {
            Some(r) => r.iter().map(|p| Vec3::from(*p)).collect(),
            None => Rig::h36m_default().rest,
        };
        let chains = self
            .chains
            .iter()
            .map(|c| RigChain {
                name: c.name.clone(),
                joints: c.joints.clone(),
                lengths: c.lengths.clone(),
                limits: c.limits.clone(),
            })
            .collect();
        Ok(Rig::new(chains, rest)?)
    }
}

pub fn read_rig(path: impl AsRef<Path>) -> Result<Rig> {
    read_json::<RigFile>(path)?.to_rig()
}

pub fn write_rig(path: impl AsRef<Path>, rig: &Rig) -> Result<()> {
    write_json(path, &RigFile::from_rig(rig))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleEntryFile {
    pub joints: Vec<usize>,
    pub weights: [f64; 3],
    /// `[slow, intense]` in m/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<[f64; 2]>,
}

/// Muscle name to definition. Muscles are evaluated in name order.
pub type MuscleMapFile = BTreeMap<String, MuscleEntryFile>;

pub fn muscle_map_from_file(f: &MuscleMapFile) -> Result<MuscleMap> {
    let map = MuscleMap {
        muscles: f
            .iter()
            .map(|(name, m)| Muscle {
                name: name.clone(),
                joints: m.joints.clone(),
                weights: m.weights,
                thresholds: m.thresholds.map(|[slow, intense]| Thresholds { slow, intense }),
            })
            .collect(),
        thresholds: Thresholds::default(),
    };
    map.validate()?;
    Ok(map)
}

pub fn muscle_map_to_file(map: &MuscleMap) -> MuscleMapFile {
    map.muscles
        .iter()
        .map(|m| {
            let e = MuscleEntryFile {
                joints: m.joints.clone(),
                weights: m.weights,
                thresholds: m.thresholds.map(|t| [t.slow, t.intense]),
            };
            (m.name.clone(), e)
        })
        .collect()
}

pub fn read_muscle_map(path: impl AsRef<Path>) -> Result<MuscleMap> {
    muscle_map_from_file(&read_json(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineFrameFile {
    pub rodrigues_axis: [f64; 3],
    pub rodrigues_angle: f64,
    pub origin_offset: [f64; 3],
    /// One of "x", "y", "z".
    pub mirror_axis: String,
}

impl Default for EngineFrameFile {
    fn default() -> Self {
        let d = EngineFrameConfig::default();
        Self {
            rodrigues_axis: d.rodrigues_axis.into(),
            rodrigues_angle: d.rodrigues_angle,
            origin_offset: d.origin_offset.into(),
            mirror_axis: "z".into(),
        }
    }
}

impl EngineFrameFile {
    pub fn to_config(&self) -> Result<EngineFrameConfig> {
        let mirror_axis = match self.mirror_axis.as_str() {
            "x" | "X" => Axis::X,
            "y" | "Y" => Axis::Y,
            "z" | "Z" => Axis::Z,
            other => return Err(CoreError::EngineConfig(format!("unknown mirror axis {other}")).into()),
        };
        let cfg = EngineFrameConfig {
            rodrigues_axis: Vec3::from(self.rodrigues_axis),
            rodrigues_angle: self.rodrigues_angle,
            origin_offset: Vec3::from(self.origin_offset),
            mirror_axis,
        };
        cfg.linear()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mvpose_core::refiner::Layout;

    #[test]
    fn weights_round_trip_and_layer_checks() {
        let mut w = RefinerWeights::zeros(5);
        for (i, p) in w.params.iter_mut().enumerate() {
            *p = i as f64 * 0.01 - 1.0;
        }
        w.preprocess = Preprocess { centering: Centering::LastFrame, scale: 10.0 };
        let f = WeightsFile::from_weights(&w);
        assert_eq!(f.layers.iter().map(|l| l.values.len()).sum::<usize>(), Layout::new(5).len);
        assert_eq!(f.to_weights().unwrap(), w);
        let mut bad = f.clone();
        bad.layers[2].shape = vec![5, 4];
        assert!(bad.to_weights().is_err());
        let mut bad = f;
        bad.version = 2;
        assert!(bad.to_weights().is_err());
    }

    #[test]
    fn layer_offsets_match_core_layout() {
        let l = Layout::new(7);
        let t = layer_table(7);
        let sizes: Vec<usize> = t.iter().map(|(_, s)| s.iter().product()).collect();
        assert_eq!(sizes[0], l.b_in - l.w_in);
        assert_eq!(sizes.iter().sum::<usize>(), l.len);
        assert_eq!(sizes.iter().rev().take(2).sum::<usize>(), l.len - l.w_out);
    }

    #[test]
    fn camera_and_rig_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cams = crate::synth::make_rig(3, 3.0, 0.5, 900.0, (640, 480)).unwrap();
        let p = dir.path().join("c.json");
        write_cameras(&p, &cams).unwrap();
        let back = read_cameras(&p).unwrap();
        for (a, b) in cams.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert!((a.rotation - b.rotation).abs().max() < 1e-15);
        }
        let rig = Rig::h36m_default();
        let p = dir.path().join("r.json");
        write_rig(&p, &rig).unwrap();
        assert_eq!(read_rig(&p).unwrap(), rig);
    }

    #[test]
    fn muscle_map_file_round_trip() {
        let map = MuscleMap::default();
        let back = muscle_map_from_file(&muscle_map_to_file(&map)).unwrap();
        assert_eq!(back.muscles.len(), map.muscles.len());
        let e = muscle_map_to_file(&map);
        assert_eq!(e["biceps_l"].joints, map.muscles[0].joints);
    }
}
