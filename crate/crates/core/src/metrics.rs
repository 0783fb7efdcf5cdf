//! MPJPE, Procrustes-aligned MPJPE and acceleration error.
//!
//! Poses are in meters; every metric is reported in millimeters.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::Matrix3;

use crate::{Error, Pose3D, Result, Vec3, NUM_JOINTS};

pub const MM_PER_M: f64 = 1000.0;

fn check_pair(pred: &Pose3D, gt: &Pose3D) -> Result<()> {
    for p in [pred, gt] {
        if p.joints.len() != NUM_JOINTS {
            return Err(Error::Topology { expected: NUM_JOINTS, found: p.joints.len() });
        }
    }
    Ok(())
}

fn mean_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, g)| (p - g).norm()).sum::<f64>() / a.len() as f64
}

/// Mean joint distance in millimeters.
pub fn mpjpe(pred: &Pose3D, gt: &Pose3D) -> Result<f64> {
    check_pair(pred, gt)?;
    Ok(mean_distance(&pred.joints, &gt.joints) * MM_PER_M)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub aligned: Pose3D,
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

/// Similarity `(s, R, tau)` minimizing `sum |s R pred_i + tau - gt_i|^2`,
/// with `det R = +1`.
pub fn procrustes_align(pred: &Pose3D, gt: &Pose3D) -> Result<Alignment> {
    check_pair(pred, gt)?;
    let n = NUM_JOINTS as f64;
    let mu_p = pred.joints.iter().sum::<Vec3>() / n;
    let mu_g = gt.joints.iter().sum::<Vec3>() / n;
    let var_p = pred.joints.iter().map(|p| (p - mu_p).norm_squared()).sum::<f64>() / n;
    if !(var_p > 1e-20) {
        return Err(Error::DegenerateAlignment);
    }
    let mut cov = Matrix3::zeros();
    for (p, g) in pred.joints.iter().zip(&gt.joints) {
        cov += (g - mu_g) * (p - mu_p).transpose();
    }
    cov /= n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.ok_or(Error::DegenerateAlignment)?, svd.v_t.ok_or(Error::DegenerateAlignment)?);
    let mut d = Vec3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let (k, _) = svd.singular_values.argmin();
        d[k] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&d) * v_t;
    let scale = svd.singular_values.component_mul(&d).sum() / var_p;
    let translation = mu_g - rotation * mu_p * scale;
    let aligned = pred.map_joints(|p| rotation * p * scale + translation);
    Ok(Alignment { aligned, scale, rotation, translation })
}

/// MPJPE after similarity alignment, millimeters.
pub fn p_mpjpe(pred: &Pose3D, gt: &Pose3D) -> Result<f64> {
    let a = procrustes_align(pred, gt)?;
    mpjpe(&a.aligned, gt)
}

/// Mean norm of the second-difference discrepancy, mm per frame squared.
pub fn accel_error(pred: &[Pose3D], gt: &[Pose3D]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Sequence(format!("{} predicted frames, {} ground-truth frames", pred.len(), gt.len())));
    }
    if pred.len() < 3 {
        return Err(Error::Sequence(format!("{} frames, need at least 3", pred.len())));
    }
    for (p, g) in pred.iter().zip(gt) {
        check_pair(p, g)?;
    }
    let mut total = 0.0;
    for t in 1..pred.len() - 1 {
        for j in 0..NUM_JOINTS {
            let ap = pred[t + 1].joints[j] - pred[t].joints[j] * 2.0 + pred[t - 1].joints[j];
            let ag = gt[t + 1].joints[j] - gt[t].joints[j] * 2.0 + gt[t - 1].joints[j];
            total += (ap - ag).norm();
        }
    }
    Ok(total / ((pred.len() - 2) * NUM_JOINTS) as f64 * MM_PER_M)
}

/// Predictions and ground truth of one labelled sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub label: String,
    pub pred: Vec<Pose3D>,
    pub gt: Vec<Pose3D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRow {
    pub label: String,
    pub frames: usize,
    pub mpjpe: f64,
    pub p_mpjpe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_frame_mpjpe: Vec<f64>,
    pub per_frame_p_mpjpe: Vec<f64>,
    pub mean_mpjpe: f64,
    pub mean_p_mpjpe: f64,
    /// Frame-weighted mean over sequences with at least 3 frames.
    pub accel_error: Option<f64>,
    /// One row per label, in order of first appearance.
    pub actions: Vec<ActionRow>,
}

impl EvalReport {
    /// Unweighted mean of the per-action rows `(mpjpe, p_mpjpe)`.
    pub fn action_average(&self) -> Option<(f64, f64)> {
        if self.actions.is_empty() {
            return None;
        }
        let n = self.actions.len() as f64;
        Some((
            self.actions.iter().map(|r| r.mpjpe).sum::<f64>() / n,
            self.actions.iter().map(|r| r.p_mpjpe).sum::<f64>() / n,
        ))
    }
}

pub fn evaluate(sequences: &[LabeledSequence]) -> Result<EvalReport> {
    let mut per_frame_mpjpe = Vec::new();
    let mut per_frame_p_mpjpe = Vec::new();
    let mut actions: Vec<(ActionRow, f64, f64)> = Vec::new();
    let (mut accel_sum, mut accel_frames) = (0.0, 0usize);
    for seq in sequences {
        if seq.pred.len() != seq.gt.len() {
            return Err(Error::Sequence(format!(
                "sequence {}: {} predicted frames, {} ground-truth frames",
                seq.label,
                seq.pred.len(),
                seq.gt.len()
            )));
        }
        let idx = match actions.iter().position(|(r, _, _)| r.label == seq.label) {
            Some(i) => i,
            None => {
                actions.push((ActionRow { label: seq.label.clone(), frames: 0, mpjpe: 0.0, p_mpjpe: 0.0 }, 0.0, 0.0));
                actions.len() - 1
            }
        };
        for (p, g) in seq.pred.iter().zip(&seq.gt) {
            let e1 = mpjpe(p, g)?;
            let e2 = p_mpjpe(p, g)?;
            per_frame_mpjpe.push(e1);
            per_frame_p_mpjpe.push(e2);
            let row = &mut actions[idx];
            row.0.frames += 1;
            row.1 += e1;
            row.2 += e2;
        }
        if seq.pred.len() >= 3 {
            let frames = seq.pred.len() - 2;
            accel_sum += accel_error(&seq.pred, &seq.gt)? * frames as f64;
            accel_frames += frames;
        }
    }
    if per_frame_mpjpe.is_empty() {
        return Err(Error::Sequence("no frames to evaluate".into()));
    }
    let n = per_frame_mpjpe.len() as f64;
    Ok(EvalReport {
        mean_mpjpe: per_frame_mpjpe.iter().sum::<f64>() / n,
        mean_p_mpjpe: per_frame_p_mpjpe.iter().sum::<f64>() / n,
        per_frame_mpjpe,
        per_frame_p_mpjpe,
        accel_error: (accel_frames > 0).then(|| accel_sum / accel_frames as f64),
        actions: actions
            .into_iter()
            .filter(|(r, _, _)| r.frames > 0)
            .map(|(mut r, s1, s2)| {
                r.mpjpe = s1 / r.frames as f64;
                r.p_mpjpe = s2 / r.frames as f64;
                r
            })
            .collect(),
    })
}
