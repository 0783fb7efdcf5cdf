//! 17-joint skeleton topology, pose containers and bone-length utilities.
//!
//! Joint order follows the Human3.6M 17-joint convention with the pelvis as
//! root. All 3D coordinates are meters in a right-handed world frame.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result, Vec2, Vec3};

pub const NUM_JOINTS: usize = 17;

pub const PELVIS: usize = 0;
pub const R_HIP: usize = 1;
pub const R_KNEE: usize = 2;
pub const R_ANKLE: usize = 3;
pub const L_HIP: usize = 4;
pub const L_KNEE: usize = 5;
pub const L_ANKLE: usize = 6;
pub const SPINE: usize = 7;
pub const THORAX: usize = 8;
pub const NECK: usize = 9;
pub const HEAD: usize = 10;
pub const L_SHOULDER: usize = 11;
pub const L_ELBOW: usize = 12;
pub const L_WRIST: usize = 13;
pub const R_SHOULDER: usize = 14;
pub const R_ELBOW: usize = 15;
pub const R_WRIST: usize = 16;

const H36M_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "spine",
    "thorax",
    "neck",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
];

const H36M_PARENTS: [Option<usize>; NUM_JOINTS] = [
    None,
    Some(PELVIS),
    Some(R_HIP),
    Some(R_KNEE),
    Some(PELVIS),
    Some(L_HIP),
    Some(L_KNEE),
    Some(PELVIS),
    Some(SPINE),
    Some(THORAX),
    Some(NECK),
    Some(THORAX),
    Some(L_SHOULDER),
    Some(L_ELBOW),
    Some(THORAX),
    Some(R_SHOULDER),
    Some(R_ELBOW),
];

/// Rest-pose offset of each joint from its parent, meters.
///
/// Subject stands upright facing +y with +z up, so the subject's right side
/// is +x. Arms hang down along the torso.
const H36M_REST_OFFSETS: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.13, 0.0, 0.0],
    [0.0, 0.0, -0.45],
    [0.0, 0.0, -0.44],
    [-0.13, 0.0, 0.0],
    [0.0, 0.0, -0.45],
    [0.0, 0.0, -0.44],
    [0.0, 0.0, 0.23],
    [0.0, 0.0, 0.25],
    [0.0, 0.03, 0.11],
    [0.0, 0.0, 0.12],
    [-0.17, 0.0, -0.03],
    [0.0, 0.0, -0.28],
    [0.0, 0.0, -0.25],
    [0.17, 0.0, -0.03],
    [0.0, 0.0, -0.28],
    [0.0, 0.0, -0.25],
];

/// Joint topology: names plus a parent index per joint (root has none).
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joint_names: Vec<String>,
    parents: Vec<Option<usize>>,
}

impl Skeleton {
    /// Validates and builds a skeleton. Exactly one root, 17 joints, no cycles.
    pub fn new(joint_names: Vec<String>, parents: Vec<Option<usize>>) -> Result<Self> {
        if joint_names.len() != NUM_JOINTS {
            return Err(Error::Topology { expected: NUM_JOINTS, found: joint_names.len() });
        }
        if parents.len() != NUM_JOINTS {
            return Err(Error::Topology { expected: NUM_JOINTS, found: parents.len() });
        }
        let roots = parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::Skeleton(alloc::format!("expected one root, found {roots}")));
        }
        for (j, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= NUM_JOINTS {
                    return Err(Error::Skeleton(alloc::format!("joint {j} has parent {p} out of range")));
                }
                if p == j {
                    return Err(Error::Skeleton(alloc::format!("joint {j} is its own parent")));
                }
            }
        }
        let skel = Self { joint_names, parents };
        for j in 0..NUM_JOINTS {
            if skel.depth(j).is_none() {
                return Err(Error::Skeleton(alloc::format!("cycle through joint {j}")));
            }
        }
        Ok(skel)
    }

    /// The Human3.6M 17-joint convention.
    pub fn h36m() -> Self {
        Self { joint_names: H36M_NAMES.iter().map(|s| s.to_string()).collect(), parents: H36M_PARENTS.to_vec() }
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn root(&self) -> usize {
        self.parents.iter().position(|p| p.is_none()).unwrap_or(0)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    /// Number of parent hops from `joint` to the root, or `None` on a cycle.
    pub fn depth(&self, joint: usize) -> Option<usize> {
        let mut cur = joint;
        for steps in 0..=self.parents.len() {
            match self.parents.get(cur)? {
                None => return Some(steps),
                Some(p) => cur = *p,
            }
        }
        None
    }

    /// `(child, parent)` pairs in joint order, one per non-root joint.
    pub fn bones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents.iter().enumerate().filter_map(|(c, p)| p.map(|p| (c, p)))
    }

    /// Children of `joint` in index order.
    pub fn children(&self, joint: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents.iter().enumerate().filter_map(move |(c, p)| (*p == Some(joint)).then_some(c))
    }

    /// Rest-pose offsets (child minus parent) of the built-in convention.
    pub fn h36m_rest_offsets() -> [Vec3; NUM_JOINTS] {
        H36M_REST_OFFSETS.map(|o| Vec3::new(o[0], o[1], o[2]))
    }

    /// Rest pose of the built-in convention with the root at `root`.
    pub fn h36m_rest_pose(root: Vec3) -> [Vec3; NUM_JOINTS] {
        let offsets = Self::h36m_rest_offsets();
        let mut out = [root; NUM_JOINTS];
        // parents precede children in the H36M ordering
        for j in 1..NUM_JOINTS {
            let p = H36M_PARENTS[j].unwrap_or(PELVIS);
            out[j] = out[p] + offsets[j];
        }
        out
    }
}

impl Default for Skeleton {
    fn default() -> Self {
        Self::h36m()
    }
}

/// 17 joint positions in meters with per-joint confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub joints: Vec<Vec3>,
    pub confidence: Vec<f64>,
    pub frame_index: u64,
    /// Seconds.
    pub timestamp: f64,
}

impl Pose3D {
    pub fn new(joints: Vec<Vec3>, frame_index: u64, timestamp: f64) -> Self {
        let confidence = alloc::vec![1.0; joints.len()];
        Self { joints, confidence, frame_index, timestamp }
    }

    pub fn zeros(frame_index: u64, timestamp: f64) -> Self {
        Self::new(alloc::vec![Vec3::zeros(); NUM_JOINTS], frame_index, timestamp)
    }

    /// Same joints mapped through `f`, metadata kept.
    pub fn map_joints(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            joints: self.joints.iter().map(f).collect(),
            confidence: self.confidence.clone(),
            frame_index: self.frame_index,
            timestamp: self.timestamp,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_pose(self)
    }
}

/// 17 pixel coordinates from one camera with per-joint confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D {
    pub joints: Vec<Vec2>,
    pub confidence: Vec<f64>,
    pub camera_id: String,
    pub frame_index: u64,
}

impl Pose2D {
    pub fn new(joints: Vec<Vec2>, confidence: Vec<f64>, camera_id: impl Into<String>, frame_index: u64) -> Self {
        Self { joints, confidence, camera_id: camera_id.into(), frame_index }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_pose(self)
    }
}

/// Read access shared by [`Pose2D`] and [`Pose3D`] for validation.
pub trait PoseData {
    fn joint_count(&self) -> usize;
    fn joint_is_finite(&self, joint: usize) -> bool;
    fn confidences(&self) -> &[f64];
}

impl PoseData for Pose3D {
    fn joint_count(&self) -> usize {
        self.joints.len()
    }
    fn joint_is_finite(&self, joint: usize) -> bool {
        self.joints[joint].iter().all(|c| c.is_finite())
    }
    fn confidences(&self) -> &[f64] {
        &self.confidence
    }
}

impl PoseData for Pose2D {
    fn joint_count(&self) -> usize {
        self.joints.len()
    }
    fn joint_is_finite(&self, joint: usize) -> bool {
        self.joints[joint].iter().all(|c| c.is_finite())
    }
    fn confidences(&self) -> &[f64] {
        &self.confidence
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoseIssue {
    JointCount { expected: usize, found: usize },
    ConfidenceCount { expected: usize, found: usize },
    NonFinite { joint: usize },
    ConfidenceOutOfRange { joint: usize, value: f64 },
}

impl fmt::Display for PoseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoseIssue::JointCount { expected, found } => write!(f, "expected {expected} joints, found {found}"),
            PoseIssue::ConfidenceCount { expected, found } => {
                write!(f, "expected {expected} confidences, found {found}")
            }
            PoseIssue::NonFinite { joint } => write!(f, "joint {joint} has a non-finite coordinate"),
            PoseIssue::ConfidenceOutOfRange { joint, value } => {
                write!(f, "joint {joint} confidence {value} outside [0, 1]")
            }
        }
    }
}

/// Problems found in a pose; the pose is valid iff this is empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<PoseIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn validate_pose<P: PoseData + ?Sized>(pose: &P) -> ValidationReport {
    let mut issues = Vec::new();
    let n = pose.joint_count();
    if n != NUM_JOINTS {
        issues.push(PoseIssue::JointCount { expected: NUM_JOINTS, found: n });
    }
    if pose.confidences().len() != n {
        issues.push(PoseIssue::ConfidenceCount { expected: n, found: pose.confidences().len() });
    }
    for j in 0..n {
        if !pose.joint_is_finite(j) {
            issues.push(PoseIssue::NonFinite { joint: j });
        }
    }
    for (j, &c) in pose.confidences().iter().enumerate() {
        if !(0.0..=1.0).contains(&c) {
            issues.push(PoseIssue::ConfidenceOutOfRange { joint: j, value: c });
        }
    }
    ValidationReport { issues }
}

/// Euclidean length of every bone, in the order of [`Skeleton::bones`].
pub fn bone_lengths(pose: &Pose3D, skel: &Skeleton) -> Result<Vec<f64>> {
    if pose.joints.len() != skel.len() {
        return Err(Error::Topology { expected: skel.len(), found: pose.joints.len() });
    }
    Ok(skel.bones().map(|(c, p)| (pose.joints[c] - pose.joints[p]).norm()).collect())
}
