//! Weighted linear (DLT) triangulation of joints from calibrated views.
//!
//! For each view the two rows `u * P[2] - P[0]` and `v * P[2] - P[1]` are
//! stacked into `A`, each pair scaled by that view's weight. The homogeneous
//! point is the right-singular vector of the smallest singular value.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3x4, RowVector4, Vector4};

use crate::camera::CameraView;
use crate::math::{abs, exp};
use crate::{Error, Pose2D, Pose3D, Result, Vec2, Vec3, NUM_JOINTS};

/// Smallest over second-smallest singular value above which the solve is
/// considered degenerate.
pub const DEGENERACY_RATIO: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct JointObservation {
    pub camera_id: String,
    pub pixel: Vec2,
    pub weight: f64,
}

impl JointObservation {
    pub fn new(camera_id: impl Into<String>, pixel: Vec2, weight: f64) -> Self {
        Self { camera_id: camera_id.into(), pixel, weight }
    }
}

/// Unweighted DLT rows with the per-row weights kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct DltSystem {
    pub a: DMatrix<f64>,
    pub row_weights: Vec<f64>,
    pub cameras: Vec<String>,
}

impl DltSystem {
    /// `w ∘ A`, each row scaled by its weight.
    pub fn weighted(&self) -> DMatrix<f64> {
        let mut m = self.a.clone();
        for (i, w) in self.row_weights.iter().enumerate() {
            m.row_mut(i).scale_mut(*w);
        }
        m
    }

    /// `|(w ∘ A) X|` for a homogeneous point.
    pub fn residual_norm(&self, x: &Vector4<f64>) -> f64 {
        (self.weighted() * x).norm()
    }

    pub fn positive_views(&self) -> usize {
        self.row_weights.chunks(2).filter(|w| w[0] > 0.0).count()
    }
}

fn find_camera<'a>(cams: &'a [CameraView], id: &str) -> Result<&'a CameraView> {
    cams.iter().find(|c| c.id == id).ok_or_else(|| Error::UnknownCamera(id.into()))
}

fn dlt_rows(p: &Matrix3x4<f64>, px: &Vec2) -> (RowVector4<f64>, RowVector4<f64>) {
    let (r0, r1, r2) = (p.row(0), p.row(1), p.row(2));
    (r2 * px.x - r0, r2 * px.y - r1)
}

pub fn assemble_dlt(cams: &[CameraView], obs: &[JointObservation]) -> Result<DltSystem> {
    let mut a = DMatrix::zeros(2 * obs.len(), 4);
    let mut row_weights = Vec::with_capacity(2 * obs.len());
    let mut cameras = Vec::with_capacity(obs.len());
    for (i, o) in obs.iter().enumerate() {
        if !(0.0..=1.0).contains(&o.weight) {
            return Err(Error::InvalidObservation(alloc::format!(
                "camera {}: weight {} outside [0, 1]",
                o.camera_id,
                o.weight
            )));
        }
        if !o.pixel.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidObservation(alloc::format!("camera {}: non-finite pixel", o.camera_id)));
        }
        let p = find_camera(cams, &o.camera_id)?.projection_matrix()?;
        let (ru, rv) = dlt_rows(&p, &o.pixel);
        a.set_row(2 * i, &ru);
        a.set_row(2 * i + 1, &rv);
        row_weights.extend([o.weight, o.weight]);
        cameras.push(o.camera_id.clone());
    }
    let sys = DltSystem { a, row_weights, cameras };
    let views = sys.positive_views();
    if views < 2 {
        return Err(Error::InsufficientViews(views));
    }
    Ok(sys)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulatedJoint {
    pub position: Vec3,
    /// Smallest singular value of the weighted system.
    pub residual: f64,
}

/// Solves `(w ∘ A) y = 0` by SVD. Zero-weight rows are excluded.
pub fn triangulate_joint(sys: &DltSystem) -> Result<TriangulatedJoint> {
    let active: Vec<usize> = (0..sys.row_weights.len()).filter(|&i| sys.row_weights[i] > 0.0).collect();
    let views = active.len() / 2;
    if views < 2 {
        return Err(Error::InsufficientViews(views));
    }
    let mut m = DMatrix::zeros(active.len(), 4);
    for (r, &i) in active.iter().enumerate() {
        m.set_row(r, &(sys.a.row(i) * sys.row_weights[i]));
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Model("SVD did not produce right singular vectors".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    let (smallest, second) = (sv[order[0]], sv[order[1]]);
    let largest = sv[order[order.len() - 1]];
    if second <= largest * 1e-10 || smallest / second > DEGENERACY_RATIO {
        let ratio = if second > 0.0 { smallest / second } else { 1.0 };
        return Err(Error::DegenerateGeometry { ratio });
    }
    let h = v_t.row(order[0]);
    let mut x = Vector4::new(h[0], h[1], h[2], h[3]);
    if abs(x.w) < 1e-12 {
        return Err(Error::PointAtInfinity { w: x.w });
    }
    if x.w < 0.0 {
        x = -x;
    }
    Ok(TriangulatedJoint { position: Vec3::new(x.x / x.w, x.y / x.w, x.z / x.w), residual: smallest })
}

/// Triangulated pose with one residual per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangulatedPose {
    pub pose: Pose3D,
    pub residuals: Vec<f64>,
}

/// Triangulates all 17 joints independently. Each view's per-joint
/// confidence is that joint's DLT weight; the output confidence is
/// `exp(-residual)`.
pub fn triangulate_pose(cams: &[CameraView], views: &[Pose2D], timestamp: f64) -> Result<TriangulatedPose> {
    let first = views.first().ok_or(Error::InsufficientViews(0))?;
    if views.len() < 2 {
        return Err(Error::InsufficientViews(views.len()));
    }
    for v in views {
        if v.frame_index != first.frame_index {
            return Err(Error::Synchronization { expected: first.frame_index, found: v.frame_index });
        }
        if v.joints.len() != NUM_JOINTS || v.confidence.len() != NUM_JOINTS {
            return Err(Error::Topology { expected: NUM_JOINTS, found: v.joints.len().min(v.confidence.len()) });
        }
    }
    let projections: Vec<Matrix3x4<f64>> =
        views.iter().map(|v| find_camera(cams, &v.camera_id)?.projection_matrix()).collect::<Result<_>>()?;

    let mut joints = Vec::with_capacity(NUM_JOINTS);
    let mut confidence = Vec::with_capacity(NUM_JOINTS);
    let mut residuals = Vec::with_capacity(NUM_JOINTS);
    for j in 0..NUM_JOINTS {
        let mut a = DMatrix::zeros(2 * views.len(), 4);
        let mut row_weights = Vec::with_capacity(2 * views.len());
        for (i, (v, p)) in views.iter().zip(&projections).enumerate() {
            let w = v.confidence[j];
            if !(0.0..=1.0).contains(&w) || !v.joints[j].iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidObservation(alloc::format!(
                    "camera {} joint {j}: weight {w}, pixel {:?}",
                    v.camera_id,
                    v.joints[j]
                )));
            }
            let (ru, rv) = dlt_rows(p, &v.joints[j]);
            a.set_row(2 * i, &ru);
            a.set_row(2 * i + 1, &rv);
            row_weights.extend([w, w]);
        }
        let sys = DltSystem { a, row_weights, cameras: views.iter().map(|v| v.camera_id.clone()).collect() };
        let t = triangulate_joint(&sys)?;
        joints.push(t.position);
        confidence.push(exp(-t.residual).clamp(0.0, 1.0));
        residuals.push(t.residual);
    }
    Ok(TriangulatedPose { pose: Pose3D { joints, confidence, frame_index: first.frame_index, timestamp }, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::rodrigues_rotation;
    use alloc::vec;
    use core::f64::consts::{FRAC_PI_2, PI};
    use nalgebra::Matrix3;

    fn k() -> Matrix3<f64> {
        Matrix3::new(1000.0, 0.0, 500.0, 0.0, 1000.0, 500.0, 0.0, 0.0, 1.0)
    }

    /// Camera at distance 3 on the xz-plane circle, looking at the origin.
    fn ring_camera(id: &str, yaw: f64) -> CameraView {
        let r = rodrigues_rotation(&Vec3::y(), yaw).unwrap();
        CameraView::new(id, k(), r, Vec3::new(0.0, 0.0, 3.0), 1000, 1000).unwrap()
    }

    fn observe(cams: &[CameraView], x: &Vec3) -> Vec<JointObservation> {
        cams.iter().map(|c| JointObservation::new(c.id.clone(), c.project(x).unwrap(), 1.0)).collect()
    }

    #[test]
    fn two_views_give_square_system() {
        let cams = [ring_camera("a", 0.0), ring_camera("b", FRAC_PI_2)];
        let sys = assemble_dlt(&cams, &observe(&cams, &Vec3::new(0.1, 0.2, 0.3))).unwrap();
        assert_eq!(sys.a.shape(), (4, 4));
    }

    #[test]
    fn noiseless_rows_annihilate_true_point() {
        let cams = [ring_camera("a", 0.0), ring_camera("b", 1.0), ring_camera("c", 2.0)];
        let x = Vec3::new(0.1, -0.2, 0.3);
        let sys = assemble_dlt(&cams, &observe(&cams, &x)).unwrap();
        let r = sys.a.clone() * Vector4::new(x.x, x.y, x.z, 1.0);
        // rows have magnitude ~1e3 * pixel; relative annihilation
        assert!(r.norm() < 1e-9 * sys.a.norm(), "{}", r.norm());
    }

    #[test]
    fn orthogonal_views_recover_point() {
        let cams = [ring_camera("a", 0.0), ring_camera("b", FRAC_PI_2)];
        let x = Vec3::new(0.1, 0.2, 0.3);
        let t = triangulate_joint(&assemble_dlt(&cams, &observe(&cams, &x)).unwrap()).unwrap();
        assert!((t.position - x).norm() < 1e-6);
    }

    #[test]
    fn symmetric_rig_origin() {
        let cams: Vec<_> = (0..4).map(|i| ring_camera(&alloc::format!("c{i}"), i as f64 * FRAC_PI_2)).collect();
        let obs: Vec<_> = cams.iter().map(|c| JointObservation::new(c.id.clone(), c.principal_point(), 1.0)).collect();
        let t = triangulate_joint(&assemble_dlt(&cams, &obs).unwrap()).unwrap();
        assert!(t.position.norm() < 1e-12);
    }

    #[test]
    fn zero_weight_view_is_ignored() {
        let cams: Vec<_> = (0..4).map(|i| ring_camera(&alloc::format!("c{i}"), 0.3 + i as f64 * 1.4)).collect();
        let x = Vec3::new(-0.2, 0.05, 0.4);
        let mut obs = observe(&cams, &x);
        obs[2].pixel.x += 50.0;
        obs[2].weight = 0.0;
        let t = triangulate_joint(&assemble_dlt(&cams, &obs).unwrap()).unwrap();
        let clean: Vec<_> = obs.iter().enumerate().filter(|(i, _)| *i != 2).map(|(_, o)| o.clone()).collect();
        let t3 = triangulate_joint(&assemble_dlt(&cams, &clean).unwrap()).unwrap();
        assert!((t.position - x).norm() < 1e-9);
        assert!((t.position - t3.position).norm() < 1e-12);
    }

    #[test]
    fn insufficient_and_unknown_views() {
        let cams = [ring_camera("a", 0.0), ring_camera("b", PI / 3.0)];
        let mut obs = observe(&cams, &Vec3::zeros());
        obs[1].weight = 0.0;
        assert_eq!(assemble_dlt(&cams, &obs), Err(Error::InsufficientViews(1)));
        let ghost = vec![JointObservation::new("zz", Vec2::zeros(), 1.0)];
        assert!(matches!(assemble_dlt(&cams, &ghost), Err(Error::UnknownCamera(_))));
    }

    #[test]
    fn identical_cameras_are_degenerate() {
        let cams = [ring_camera("a", 0.4), ring_camera("b", 0.4)];
        let obs = observe(&cams, &Vec3::new(0.1, 0.1, 0.1));
        let sys = assemble_dlt(&cams, &obs).unwrap();
        assert!(matches!(triangulate_joint(&sys), Err(Error::DegenerateGeometry { .. })));
    }

    #[test]
    fn pose_needs_two_synchronized_views() {
        let cams = [ring_camera("a", 0.0), ring_camera("b", 1.0)];
        let v = Pose2D::new(vec![Vec2::new(500.0, 500.0); NUM_JOINTS], vec![1.0; NUM_JOINTS], "a", 3);
        assert_eq!(triangulate_pose(&cams, &[v.clone()], 0.0), Err(Error::InsufficientViews(1)));
        let mut w = v.clone();
        w.camera_id = "b".into();
        w.frame_index = 4;
        assert_eq!(triangulate_pose(&cams, &[v, w], 0.0), Err(Error::Synchronization { expected: 3, found: 4 }));
    }
}
