//! Parametric motions driven by sinusoidal joint angles on the rest rig.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use mvpose_core::camera::rodrigues_rotation;
use mvpose_core::skeleton::*;
use mvpose_core::{Pose3D, Skeleton, Vec3};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper bound on any joint speed in generated motion, m/s.
pub const MAX_JOINT_SPEED: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Walk,
    Squat,
    ArmRaise,
    LegFold,
}

impl MotionKind {
    pub const ALL: [MotionKind; 4] = [MotionKind::Walk, MotionKind::Squat, MotionKind::ArmRaise, MotionKind::LegFold];

    /// Cycle length in seconds at tempo 1.
    pub fn base_period(self) -> f64 {
        match self {
            MotionKind::Walk => 1.2,
            MotionKind::Squat => 3.0,
            MotionKind::ArmRaise => 2.0,
            MotionKind::LegFold => 2.5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MotionKind::Walk => "walk",
            MotionKind::Squat => "squat",
            MotionKind::ArmRaise => "arm_raise",
            MotionKind::LegFold => "leg_fold",
        }
    }
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MotionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown motion kind `{s}` (walk, squat, arm_raise, leg_fold)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub kind: MotionKind,
    pub seconds: f64,
    pub fps: f64,
    /// Frequency multiplier; the cycle period is `base_period / tempo`.
    pub tempo: f64,
    /// Where the pelvis rests.
    pub origin: [f64; 3],
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { kind: MotionKind::Walk, seconds: 10.0, fps: 50.0, tempo: 1.0, origin: [0.0; 3] }
    }
}

impl MotionConfig {
    pub fn period(&self) -> f64 {
        self.kind.base_period() / self.tempo
    }

    pub fn frames(&self) -> usize {
        (self.seconds * self.fps).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.seconds > 0.0 && self.seconds.is_finite()) {
            return Err(Error::Config(format!("seconds must be positive, got {}", self.seconds)));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if !(self.tempo > 0.0 && self.tempo.is_finite()) {
            return Err(Error::Config(format!("tempo must be positive, got {}", self.tempo)));
        }
        if self.frames() == 0 {
            return Err(Error::Config("motion shorter than one frame".into()));
        }
        Ok(())
    }
}

/// Per-sequence random variation drawn from the seed.
#[derive(Debug, Clone, Copy)]
struct Jitter {
    amplitude: f64,
    phase: f64,
    yaw: f64,
}

fn rx(a: f64) -> Matrix3<f64> {
    rodrigues_rotation(&Vec3::x(), a).expect("unit axis")
}

fn ry(a: f64) -> Matrix3<f64> {
    rodrigues_rotation(&Vec3::y(), a).expect("unit axis")
}

fn rz(a: f64) -> Matrix3<f64> {
    rodrigues_rotation(&Vec3::z(), a).expect("unit axis")
}

/// Local joint rotations at time `t`. A rotation stored at joint `j` turns
/// every bone below `j`. Positive x-rotation swings a hanging limb forward.
fn local_rotations(kind: MotionKind, t: f64, period: f64, j: &Jitter) -> [Matrix3<f64>; NUM_JOINTS] {
    let mut r = [Matrix3::identity(); NUM_JOINTS];
    let a = j.amplitude;
    let w = TAU / period * t + j.phase;
    let s = w.sin();
    r[PELVIS] = rz(j.yaw);
    match kind {
        MotionKind::Walk => {
            r[R_HIP] = rx(0.35 * a * s);
            r[L_HIP] = rx(-0.35 * a * s);
            r[R_KNEE] = rx(-0.3 * a * (1.0 - w.cos()));
            r[L_KNEE] = rx(-0.3 * a * (1.0 + w.cos()));
            r[R_SHOULDER] = rx(-0.3 * a * s);
            r[L_SHOULDER] = rx(0.3 * a * s);
            r[R_ELBOW] = rx(0.25);
            r[L_ELBOW] = rx(0.25);
            r[SPINE] = rz(0.05 * a * s);
        }
        MotionKind::Squat => {
            let d = 0.5 * (1.0 - w.cos());
            r[R_HIP] = rx(1.2 * a * d);
            r[L_HIP] = rx(1.2 * a * d);
            r[R_KNEE] = rx(-2.0 * a * d);
            r[L_KNEE] = rx(-2.0 * a * d);
            r[SPINE] = rx(-0.4 * a * d);
            r[R_SHOULDER] = rx(1.3 * a * d);
            r[L_SHOULDER] = rx(1.3 * a * d);
        }
        MotionKind::ArmRaise => {
            let lift = 1.25 * a * (1.0 - w.cos());
            r[L_SHOULDER] = ry(lift);
            r[R_SHOULDER] = ry(-lift);
            r[L_ELBOW] = rx(0.15 * a * (1.0 - w.cos()));
            r[R_ELBOW] = rx(0.15 * a * (1.0 - w.cos()));
        }
        MotionKind::LegFold => {
            let fl = s.max(0.0).powi(2);
            let fr = (-s).max(0.0).powi(2);
            r[L_HIP] = rx(1.3 * a * fl);
            r[L_KNEE] = rx(-2.1 * a * fl);
            r[R_HIP] = rx(1.3 * a * fr);
            r[R_KNEE] = rx(-2.1 * a * fr);
            r[L_SHOULDER] = ry(0.5 * a * fr);
            r[R_SHOULDER] = ry(-0.5 * a * fl);
        }
    }
    r
}

/// Forward kinematics over the rest offsets; parents precede children.
fn forward_kinematics(parents: &[Option<usize>], offsets: &[Vec3], rot: &[Matrix3<f64>]) -> Vec<Vec3> {
    let n = parents.len();
    let mut global = vec![Matrix3::identity(); n];
    let mut pos = vec![Vec3::zeros(); n];
    for j in 0..n {
        match parents[j] {
            None => {
                global[j] = rot[j];
                pos[j] = offsets[j];
            }
            Some(p) => {
                global[j] = global[p] * rot[j];
                pos[j] = pos[p] + global[p] * offsets[j];
            }
        }
    }
    pos
}

/// Generates a pose sequence. The skeleton must use the built-in 17-joint
/// topology. For squats and leg folds the body is lifted or lowered so the
/// lowest foot stays at rest height.
pub fn synth_motion(skel: &Skeleton, cfg: &MotionConfig, seed: u64) -> Result<Vec<Pose3D>> {
    cfg.validate()?;
    if *skel != Skeleton::h36m() {
        return Err(Error::Config("motion synthesis needs the built-in 17-joint skeleton".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Jitter {
        amplitude: rng.random_range(0.85..1.15),
        phase: rng.random_range(0.0..TAU),
        yaw: rng.random_range(-0.3..0.3),
    };
    // squats start standing
    let jitter = if cfg.kind == MotionKind::Squat { Jitter { phase: 0.0, ..jitter } } else { jitter };
    let offsets = Skeleton::h36m_rest_offsets();
    let rest = Skeleton::h36m_rest_pose(Vec3::zeros());
    let foot_rest = rest[L_ANKLE].z.min(rest[R_ANKLE].z);
    let origin = Vec3::from(cfg.origin);
    let period = cfg.period();

    let mut out = Vec::with_capacity(cfg.frames());
    for i in 0..cfg.frames() {
        let t = i as f64 / cfg.fps;
        let rot = local_rotations(cfg.kind, t, period, &jitter);
        let mut joints = forward_kinematics(skel.parents(), &offsets, &rot);
        let mut shift = origin;
        match cfg.kind {
            MotionKind::Squat | MotionKind::LegFold => {
                shift.z += foot_rest - joints[L_ANKLE].z.min(joints[R_ANKLE].z);
            }
            MotionKind::Walk => {
                shift.z += 0.02 * (2.0 * (TAU / period * t + jitter.phase)).sin();
                shift.y += 0.05 * (TAU / period * t + jitter.phase + 0.5 * PI).sin();
            }
            MotionKind::ArmRaise => {}
        }
        for p in &mut joints {
            *p += shift;
        }
        out.push(Pose3D::new(joints, i as u64, t));
    }
    let top = max_joint_speed(&out);
    if top > MAX_JOINT_SPEED {
        return Err(Error::Config(format!(
            "{} at tempo {} moves a joint at {top:.2} m/s (limit {MAX_JOINT_SPEED}); lower the tempo",
            cfg.kind.as_str(),
            cfg.tempo
        )));
    }
    Ok(out)
}

/// Largest finite-difference joint speed over a sequence, m/s.
pub fn max_joint_speed(poses: &[Pose3D]) -> f64 {
    poses
        .windows(2)
        .flat_map(|w| {
            let dt = w[1].timestamp - w[0].timestamp;
            w[0].joints.iter().zip(&w[1].joints).map(move |(a, b)| (b - a).norm() / dt)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mvpose_core::skeleton::bone_lengths;

    fn cfg(kind: MotionKind) -> MotionConfig {
        MotionConfig { kind, seconds: 6.0, ..Default::default() }
    }

    #[test]
    fn bone_lengths_stay_constant() {
        let skel = Skeleton::h36m();
        for kind in MotionKind::ALL {
            let poses = synth_motion(&skel, &cfg(kind), 3).unwrap();
            let first = bone_lengths(&poses[0], &skel).unwrap();
            let rest: Vec<f64> = Skeleton::h36m_rest_offsets()[1..].iter().map(|o| o.norm()).collect();
            for (a, b) in first.iter().zip(&rest) {
                assert!((a - b).abs() < 1e-9);
            }
            for p in &poses {
                for (a, b) in bone_lengths(p, &skel).unwrap().iter().zip(&first) {
                    assert!((a - b).abs() < 1e-9, "{kind:?}");
                }
            }
            assert!(max_joint_speed(&poses) <= MAX_JOINT_SPEED);
        }
    }

    #[test]
    fn squat_pelvis_height_has_the_configured_period() {
        let c = cfg(MotionKind::Squat);
        let poses = synth_motion(&Skeleton::h36m(), &c, 1).unwrap();
        let z: Vec<f64> = poses.iter().map(|p| p.joints[PELVIS].z).collect();
        let lag = (c.period() * c.fps).round() as usize;
        for i in 0..z.len() - lag {
            assert!((z[i] - z[i + lag]).abs() < 1e-9);
        }
        let (lo, hi) = z.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(hi - lo > 0.2, "pelvis moves {}", hi - lo);
        // lowest point half a period in
        let half = lag / 2;
        assert!((z[half] - lo).abs() < 1e-3);
    }

    #[test]
    fn same_seed_same_motion_other_seed_differs() {
        let skel = Skeleton::h36m();
        let a = synth_motion(&skel, &cfg(MotionKind::Walk), 9).unwrap();
        let b = synth_motion(&skel, &cfg(MotionKind::Walk), 9).unwrap();
        let c = synth_motion(&skel, &cfg(MotionKind::Walk), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_config_and_unknown_kind() {
        assert!("jump".parse::<MotionKind>().is_err());
        assert_eq!("leg_fold".parse::<MotionKind>().unwrap(), MotionKind::LegFold);
        let skel = Skeleton::h36m();
        assert!(synth_motion(&skel, &MotionConfig { seconds: 0.0, ..Default::default() }, 0).is_err());
        let fast = MotionConfig { kind: MotionKind::ArmRaise, tempo: 4.0, ..Default::default() };
        assert!(matches!(synth_motion(&skel, &fast, 0), Err(Error::Config(_))));
    }
}
