//! FABRIK inverse kinematics for joint chains and a multi-chain body rig.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math::{acos, cos, sin};
use crate::{Error, Pose3D, Result, Vec3, NUM_JOINTS};

/// Nudge applied along +x when two points that must be separated coincide.
pub const COINCIDENT_NUDGE: f64 = 1e-9;
const LENGTH_TOL: f64 = 1e-9;

/// Joint positions `p_1..p_n` (root first), segment lengths and root anchor.
///
/// `limits[i]`, when set, bounds the angle in radians between segment
/// `i - 1 -> i` and its parent segment `i - 2 -> i - 1`; entries for the
/// first two joints are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub positions: Vec<Vec3>,
    pub lengths: Vec<f64>,
    pub anchor: Vec3,
    pub limits: Option<Vec<Option<f64>>>,
}

impl Chain {
    /// Chain at rest: lengths are taken from `positions`, the anchor is the
    /// first position.
    pub fn from_positions(positions: Vec<Vec3>) -> Result<Self> {
        let lengths = positions.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let anchor = positions.first().copied().unwrap_or_else(Vec3::zeros);
        let chain = Self { positions, lengths, anchor, limits: None };
        chain.validate()?;
        Ok(chain)
    }

    pub fn with_limits(mut self, limits: Vec<Option<f64>>) -> Result<Self> {
        self.limits = Some(limits);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n < 2 {
            return Err(Error::Chain(format!("{n} joints, need at least 2")));
        }
        if self.lengths.len() != n - 1 {
            return Err(Error::Chain(format!("{} lengths for {n} joints", self.lengths.len())));
        }
        if !finite(&self.anchor) || !self.positions.iter().all(finite) {
            return Err(Error::Chain("non-finite position".into()));
        }
        for (i, (&d, w)) in self.lengths.iter().zip(self.positions.windows(2)).enumerate() {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Chain(format!("segment {i} has length {d}")));
            }
            let actual = (w[1] - w[0]).norm();
            if (actual - d).abs() > LENGTH_TOL * d.max(1.0) {
                return Err(Error::Chain(format!("segment {i}: positions give {actual}, length is {d}")));
            }
        }
        if let Some(limits) = &self.limits {
            if limits.len() != n {
                return Err(Error::Chain(format!("{} limits for {n} joints", limits.len())));
            }
            if limits.iter().flatten().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(Error::Chain("limit angles must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

fn finite(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IkStatus {
    Reached,
    Unreachable,
    MaxIterations,
}

impl IkStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            IkStatus::Reached => "reached",
            IkStatus::Unreachable => "unreachable",
            IkStatus::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub positions: Vec<Vec3>,
    pub iterations: usize,
    /// `|p_n - t|` at return.
    pub error: f64,
    pub status: IkStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self { tol: 0.01, max_iter: 20 }
    }
}

/// `(dist <= sum d_i, dist)` with `dist = |anchor - t|`.
pub fn reachable(chain: &Chain, target: &Vec3) -> (bool, f64) {
    let dist = (chain.anchor - target).norm();
    (dist <= chain.total_length(), dist)
}

/// Lays the chain out straight from the anchor toward `target`.
pub fn stretch_toward(chain: &Chain, target: &Vec3) -> Result<Vec<Vec3>> {
    let mut p = Vec::with_capacity(chain.len());
    p.push(chain.anchor);
    for (i, &d) in chain.lengths.iter().enumerate() {
        let r = (target - p[i]).norm();
        if r == 0.0 {
            return Err(Error::CoincidentTarget { joint: i });
        }
        let lambda = d / r;
        p.push(p[i] * (1.0 - lambda) + target * lambda);
    }
    Ok(p)
}

/// Places `moving` at distance `d` from `fixed` on the segment between them.
fn place(fixed: &Vec3, moving: &Vec3, d: f64) -> Vec3 {
    let mut m = *moving;
    let mut r = (fixed - m).norm();
    if r == 0.0 {
        m.x += COINCIDENT_NUDGE;
        r = (fixed - m).norm();
    }
    let lambda = d / r;
    fixed * (1.0 - lambda) + m * lambda
}

/// End effector to `target`, then every joint back toward it in turn.
pub fn forward_reach(positions: &[Vec3], lengths: &[f64], target: &Vec3) -> Vec<Vec3> {
    let mut p = positions.to_vec();
    let n = p.len();
    p[n - 1] = *target;
    for i in (0..n - 1).rev() {
        p[i] = place(&p[i + 1], &p[i], lengths[i]);
    }
    p
}

/// Root to `anchor`, then every joint outward in turn.
pub fn backward_reach(positions: &[Vec3], lengths: &[f64], anchor: &Vec3) -> Vec<Vec3> {
    let mut p = positions.to_vec();
    p[0] = *anchor;
    for i in 0..p.len() - 1 {
        p[i + 1] = place(&p[i], &p[i + 1], lengths[i]);
    }
    p
}

/// Projects each constrained segment into its cone around the parent
/// segment, root outward; descendants move with the projected joint.
pub fn apply_limits(positions: &mut [Vec3], limits: &[Option<f64>]) {
    for i in 2..positions.len() {
        let Some(max_angle) = limits.get(i).copied().flatten() else { continue };
        let parent = positions[i - 1] - positions[i - 2];
        let seg = positions[i] - positions[i - 1];
        let (pn, sn) = (parent.norm(), seg.norm());
        if pn == 0.0 || sn == 0.0 {
            continue;
        }
        let u = parent / pn;
        let v = seg / sn;
        if acos(u.dot(&v)) <= max_angle {
            continue;
        }
        let mut w = v - u * u.dot(&v);
        if w.norm() < 1e-12 {
            // anti-parallel: bend toward any perpendicular, chosen deterministically
            let helper = if u.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            w = helper - u * u.dot(&helper);
        }
        let w = w.normalize();
        let new = positions[i - 1] + (u * cos(max_angle) + w * sin(max_angle)) * sn;
        let delta = new - positions[i];
        for p in &mut positions[i..] {
            *p += delta;
        }
    }
}

pub fn solve(chain: &Chain, target: &Vec3, cfg: &IkConfig) -> Result<IkSolution> {
    chain.validate()?;
    if !finite(target) {
        return Err(Error::Chain("non-finite target".into()));
    }
    if !(cfg.tol.is_finite() && cfg.tol >= 0.0) {
        return Err(Error::Chain(format!("invalid tolerance {}", cfg.tol)));
    }
    let n = chain.len();
    let (ok, _) = reachable(chain, target);
    if !ok {
        let positions = stretch_toward(chain, target)?;
        let error = (positions[n - 1] - target).norm();
        return Ok(IkSolution { positions, iterations: 0, error, status: IkStatus::Unreachable });
    }
    let limits = chain.limits.as_deref();
    let mut p = chain.positions.clone();
    if p[0] != chain.anchor {
        p = backward_reach(&p, &chain.lengths, &chain.anchor);
        if let Some(l) = limits {
            apply_limits(&mut p, l);
        }
    }
    let mut error = (p[n - 1] - target).norm();
    let mut iterations = 0;
    while error > cfg.tol && iterations < cfg.max_iter {
        p = forward_reach(&p, &chain.lengths, target);
        if let Some(l) = limits {
            apply_limits(&mut p, l);
        }
        p = backward_reach(&p, &chain.lengths, &chain.anchor);
        if let Some(l) = limits {
            apply_limits(&mut p, l);
        }
        iterations += 1;
        error = (p[n - 1] - target).norm();
    }
    let status = if error <= cfg.tol { IkStatus::Reached } else { IkStatus::MaxIterations };
    Ok(IkSolution { positions: p, iterations, error, status })
}

/// One chain of the body rig as skeleton joint indices, root first.
#[derive(Debug, Clone, PartialEq)]
pub struct RigChain {
    pub name: String,
    pub joints: Vec<usize>,
    pub lengths: Vec<f64>,
    pub limits: Option<Vec<Option<f64>>>,
}

/// Chains solved in order. A chain whose root joint was placed by an earlier
/// chain is anchored there; otherwise it is anchored at the root's target.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub chains: Vec<RigChain>,
    /// Initial joint positions used before any frame has been solved.
    pub rest: Vec<Vec3>,
}

impl Rig {
    pub fn new(chains: Vec<RigChain>, rest: Vec<Vec3>) -> Result<Self> {
        let rig = Self { chains, rest };
        rig.validate()?;
        Ok(rig)
    }

    /// Spine, both arms, both legs, with lengths from the rest skeleton.
    pub fn h36m_default() -> Self {
        use crate::skeleton::*;
        let rest: Vec<Vec3> = Skeleton::h36m_rest_pose(Vec3::zeros()).to_vec();
        let defs: [(&str, &[usize]); 5] = [
            ("spine", &[PELVIS, SPINE, THORAX, NECK, HEAD]),
            ("left_arm", &[THORAX, L_SHOULDER, L_ELBOW, L_WRIST]),
            ("right_arm", &[THORAX, R_SHOULDER, R_ELBOW, R_WRIST]),
            ("left_leg", &[PELVIS, L_HIP, L_KNEE, L_ANKLE]),
            ("right_leg", &[PELVIS, R_HIP, R_KNEE, R_ANKLE]),
        ];
        let chains = defs
            .iter()
            .map(|(name, joints)| RigChain {
                name: (*name).into(),
                joints: joints.to_vec(),
                lengths: joints.windows(2).map(|w| (rest[w[1]] - rest[w[0]]).norm()).collect(),
                limits: None,
            })
            .collect();
        Self { chains, rest }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rest.len() != NUM_JOINTS {
            return Err(Error::Topology { expected: NUM_JOINTS, found: self.rest.len() });
        }
        let mut placed = [false; NUM_JOINTS];
        for c in &self.chains {
            if c.joints.len() < 2 || c.lengths.len() != c.joints.len() - 1 {
                return Err(Error::Chain(format!(
                    "chain {}: {} joints, {} lengths",
                    c.name,
                    c.joints.len(),
                    c.lengths.len()
                )));
            }
            if let Some(&j) = c.joints.iter().find(|&&j| j >= NUM_JOINTS) {
                return Err(Error::Chain(format!("chain {}: joint index {j} out of range", c.name)));
            }
            if c.lengths.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(Error::Chain(format!("chain {}: non-positive segment length", c.name)));
            }
            if c.limits.as_ref().is_some_and(|l| l.len() != c.joints.len()) {
                return Err(Error::Chain(format!("chain {}: limit count mismatch", c.name)));
            }
            for &j in &c.joints[1..] {
                if placed[j] {
                    return Err(Error::Chain(format!("chain {}: joint {j} already driven by another chain", c.name)));
                }
                placed[j] = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigSolution {
    pub positions: Vec<Vec3>,
    pub chains: Vec<IkSolution>,
}

/// Solves a rig frame by frame, warm-starting from the previous solution.
#[derive(Debug, Clone)]
pub struct RigSolver {
    rig: Rig,
    cfg: IkConfig,
    state: Vec<Vec3>,
}

impl RigSolver {
    pub fn new(rig: Rig, cfg: IkConfig) -> Result<Self> {
        rig.validate()?;
        let state = rig.rest.clone();
        Ok(Self { rig, cfg, state })
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn solve(&mut self, targets: &Pose3D) -> Result<RigSolution> {
        if targets.joints.len() != NUM_JOINTS {
            return Err(Error::Topology { expected: NUM_JOINTS, found: targets.joints.len() });
        }
        let mut solved = [false; NUM_JOINTS];
        let mut positions = self.state.clone();
        let mut results = Vec::with_capacity(self.rig.chains.len());
        for c in &self.rig.chains {
            let root = c.joints[0];
            let anchor = if solved[root] { positions[root] } else { targets.joints[root] };
            // rigidly carry the chain's previous shape onto its anchor
            let shift = anchor - self.state[root];
            let mut start: Vec<Vec3> = c.joints.iter().map(|&j| self.state[j] + shift).collect();
            // keep rest lengths exact even if the stored state drifted
            start = backward_reach(&start, &c.lengths, &anchor);
            let chain = Chain { positions: start, lengths: c.lengths.clone(), anchor, limits: c.limits.clone() };
            let end = *c.joints.last().expect("validated chain");
            let sol = solve(&chain, &targets.joints[end], &self.cfg)?;
            for (&j, p) in c.joints.iter().zip(&sol.positions) {
                positions[j] = *p;
                solved[j] = true;
            }
            results.push(sol);
        }
        self.state = positions.clone();
        Ok(RigSolution { positions, chains: results })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn straight(n: usize) -> Chain {
        Chain::from_positions((0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn reachability_boundaries() {
        let c = straight(3);
        assert_eq!(reachable(&c, &Vec3::zeros()), (true, 0.0));
        assert!(!reachable(&c, &Vec3::new(0.0, 3.0, 0.0)).0);
        assert!(reachable(&c, &Vec3::new(0.0, 2.0, 0.0)).0);
    }

    #[test]
    fn stretch_examples() {
        let c = straight(3);
        let p = stretch_toward(&c, &Vec3::new(0.0, 3.0, 0.0)).unwrap();
        assert_eq!(p, vec![Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 2.0, 0.0)]);
        let p = stretch_toward(&c, &Vec3::new(3.0, 0.0, 0.0)).unwrap();
        assert_eq!(p, c.positions);
        assert!(matches!(stretch_toward(&c, &Vec3::zeros()), Err(Error::CoincidentTarget { joint: 0 })));
    }

    #[test]
    fn forward_reach_translates_straight_chain() {
        let c = straight(4);
        let t = Vec3::new(3.1, 0.0, 0.0);
        let p = forward_reach(&c.positions, &c.lengths, &t);
        for (a, b) in p.iter().zip(&c.positions) {
            assert_relative_eq!(a - b, Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-12);
        }
        let same = forward_reach(&c.positions, &c.lengths, &c.positions[3]);
        assert_eq!(same, c.positions);
    }

    #[test]
    fn backward_reach_snaps_root() {
        let c = straight(3);
        let moved: Vec<Vec3> = c.positions.iter().map(|p| p + Vec3::new(0.0, 0.2, 0.0)).collect();
        let p = backward_reach(&moved, &c.lengths, &Vec3::zeros());
        assert_eq!(p[0], Vec3::zeros());
        for w in p.windows(2) {
            assert_relative_eq!((w[1] - w[0]).norm(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(backward_reach(&c.positions, &c.lengths, &Vec3::zeros()), c.positions);
    }

    #[test]
    fn coincident_joints_are_nudged() {
        let p = forward_reach(&[Vec3::zeros(), Vec3::zeros()], &[1.0], &Vec3::zeros());
        assert_relative_eq!((p[1] - p[0]).norm(), 1.0, epsilon = 1e-12);
        assert!(p[0].x > 0.0);
    }

    #[test]
    fn solve_examples() {
        let c = straight(3);
        let s = solve(&c, &Vec3::new(1.0, 1.0, 0.0), &IkConfig::default()).unwrap();
        assert_eq!(s.status, IkStatus::Reached);
        assert!(s.error <= 0.01);
        let s = solve(&c, &Vec3::new(0.0, 5.0, 0.0), &IkConfig::default()).unwrap();
        assert_eq!(s.status, IkStatus::Unreachable);
        let s = solve(&c, &Vec3::new(2.0, 0.0, 0.0), &IkConfig::default()).unwrap();
        assert_eq!((s.status, s.iterations), (IkStatus::Reached, 0));
    }

    #[test]
    fn limits_bound_bend_angles() {
        let c = straight(4).with_limits(vec![None, None, Some(0.3), Some(0.3)]).unwrap();
        let s = solve(&c, &Vec3::new(0.5, 1.0, 0.0), &IkConfig::default()).unwrap();
        let p = &s.positions;
        for i in 2..4 {
            let u = (p[i - 1] - p[i - 2]).normalize();
            let v = (p[i] - p[i - 1]).normalize();
            assert!(acos(u.dot(&v)) <= 0.3 + 1e-9);
        }
        assert_eq!(p[0], Vec3::zeros());
    }

    #[test]
    fn invalid_chains() {
        assert!(Chain::from_positions(vec![Vec3::zeros()]).is_err());
        assert!(Chain::from_positions(vec![Vec3::zeros(), Vec3::zeros()]).is_err());
        let mut c = straight(3);
        c.lengths[1] = 2.0;
        assert!(matches!(solve(&c, &Vec3::zeros(), &IkConfig::default()), Err(Error::Chain(_))));
    }

    #[test]
    fn rig_tracks_rest_pose_targets() {
        let rig = Rig::h36m_default();
        let mut solver = RigSolver::new(rig, IkConfig::default()).unwrap();
        let offset = Vec3::new(0.3, -0.2, 0.1);
        let targets = Pose3D::new(crate::Skeleton::h36m_rest_pose(offset).to_vec(), 0, 0.0);
        let sol = solver.solve(&targets).unwrap();
        assert!(sol.chains.iter().all(|c| c.status == IkStatus::Reached));
        for (p, t) in sol.positions.iter().zip(&targets.joints) {
            assert_relative_eq!(p, t, epsilon = 1e-9);
        }
    }
}
