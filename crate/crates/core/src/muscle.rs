//! Muscle intensity levels from joint velocities.
//!
//! Speeds are in pose units (meters) per second. With the default 0.02 s
//! frame time the default thresholds classify weighted speeds of at least
//! 0.2 m/s as intense and at most 0.08 m/s as slow.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math::abs;
use crate::{Error, Pose3D, Result, Vec3, NUM_JOINTS};

pub const DEFAULT_DT: f64 = 0.02;
/// Relative mismatch between `dt` and the pose timestamps that triggers a
/// warning.
pub const DT_WARN_RATIO: f64 = 0.1;

/// `(cur - prev) / dt`.
pub fn joint_velocity(prev: &Vec3, cur: &Vec3, dt: f64) -> Result<Vec3> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::TimeStep(dt));
    }
    Ok((cur - prev) / dt)
}

/// `w_x |v_x| + w_y |v_y| + w_z |v_z|`.
pub fn speed(v: &Vec3, weights: &[f64; 3]) -> Result<f64> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::MuscleConfig(format!("negative or non-finite axis weights {weights:?}")));
    }
    Ok(weights[0] * abs(v.x) + weights[1] * abs(v.y) + weights[2] * abs(v.z))
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Thresholds {
    pub slow: f64,
    pub intense: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { slow: 0.08, intense: 0.2 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.slow > 0.0 && self.slow < self.intense && self.intense.is_finite()) {
            return Err(Error::MuscleConfig(format!(
                "thresholds need 0 < slow < intense, got slow {} intense {}",
                self.slow, self.intense
            )));
        }
        Ok(())
    }
}

/// Ordered from least to most intense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Slow,
    Moderate,
    Intense,
}

impl Level {
    pub fn color(self) -> &'static str {
        match self {
            Level::Intense => "yellow",
            Level::Moderate => "green",
            Level::Slow => "blue",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Intense => "intense",
            Level::Moderate => "moderate",
            Level::Slow => "slow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityLevel {
    pub level: Level,
    pub speed: f64,
}

pub fn classify(speed: f64, th: &Thresholds) -> Result<IntensityLevel> {
    th.validate()?;
    let level = if speed >= th.intense {
        Level::Intense
    } else if speed <= th.slow {
        Level::Slow
    } else {
        Level::Moderate
    };
    Ok(IntensityLevel { level, speed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Muscle {
    pub name: String,
    pub joints: Vec<usize>,
    pub weights: [f64; 3],
    pub thresholds: Option<Thresholds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuscleMap {
    pub muscles: Vec<Muscle>,
    pub thresholds: Thresholds,
}

const EQUAL: [f64; 3] = [1.0 / 3.0; 3];

impl Default for MuscleMap {
    fn default() -> Self {
        use crate::skeleton::*;
        let table: [(&str, &[usize]); 12] = [
            ("biceps_l", &[L_ELBOW, L_WRIST]),
            ("biceps_r", &[R_ELBOW, R_WRIST]),
            ("triceps_l", &[L_SHOULDER, L_ELBOW, L_WRIST]),
            ("triceps_r", &[R_SHOULDER, R_ELBOW, R_WRIST]),
            ("deltoid_l", &[L_SHOULDER, L_ELBOW]),
            ("deltoid_r", &[R_SHOULDER, R_ELBOW]),
            ("quadriceps_l", &[L_HIP, L_KNEE]),
            ("quadriceps_r", &[R_HIP, R_KNEE]),
            ("hamstrings_l", &[L_HIP, L_KNEE, L_ANKLE]),
            ("hamstrings_r", &[R_HIP, R_KNEE, R_ANKLE]),
            ("calf_l", &[L_KNEE, L_ANKLE]),
            ("calf_r", &[R_KNEE, R_ANKLE]),
        ];
        Self {
            muscles: table
                .iter()
                .map(|(name, joints)| Muscle {
                    name: (*name).into(),
                    joints: joints.to_vec(),
                    weights: EQUAL,
                    thresholds: None,
                })
                .collect(),
            thresholds: Thresholds::default(),
        }
    }
}

impl MuscleMap {
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        for m in &self.muscles {
            if m.joints.is_empty() {
                return Err(Error::MuscleConfig(format!("muscle {} has no joints", m.name)));
            }
            if let Some(j) = m.joints.iter().find(|&&j| j >= NUM_JOINTS) {
                return Err(Error::MuscleConfig(format!("muscle {}: unknown joint index {j}", m.name)));
            }
            if m.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
                || abs(m.weights.iter().sum::<f64>() - 1.0) > 1e-6
            {
                return Err(Error::MuscleConfig(format!(
                    "muscle {}: weights {:?} must be non-negative and sum to 1",
                    m.name, m.weights
                )));
            }
            if let Some(t) = &m.thresholds {
                t.validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuscleReading {
    pub name: String,
    pub intensity: IntensityLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuscleFrame {
    pub frame_index: u64,
    pub muscles: Vec<MuscleReading>,
    /// Consistency notes, e.g. a time step that disagrees with the poses.
    pub warnings: Vec<String>,
}

/// Per muscle: mean weighted speed of its joints between two poses.
pub fn muscle_levels(prev: &Pose3D, cur: &Pose3D, map: &MuscleMap, dt: f64) -> Result<MuscleFrame> {
    map.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::TimeStep(dt));
    }
    for p in [prev, cur] {
        if p.joints.len() != NUM_JOINTS {
            return Err(Error::Topology { expected: NUM_JOINTS, found: p.joints.len() });
        }
        if !p.joints.iter().all(|j| j.iter().all(|v| v.is_finite())) {
            return Err(Error::MuscleConfig(format!("frame {} has non-finite joints", p.frame_index)));
        }
    }
    let mut warnings = Vec::new();
    let observed = cur.timestamp - prev.timestamp;
    if abs(observed - dt) > DT_WARN_RATIO * dt {
        warnings.push(format!("time step {dt} s differs from pose timestamps ({observed} s apart)"));
    }
    let mut muscles = Vec::with_capacity(map.muscles.len());
    for m in &map.muscles {
        let mut total = 0.0;
        for &j in &m.joints {
            total += speed(&joint_velocity(&prev.joints[j], &cur.joints[j], dt)?, &m.weights)?;
        }
        let s = total / m.joints.len() as f64;
        let intensity = classify(s, m.thresholds.as_ref().unwrap_or(&map.thresholds))?;
        muscles.push(MuscleReading { name: m.name.clone(), intensity });
    }
    Ok(MuscleFrame { frame_index: cur.frame_index, muscles, warnings })
}
