//! Pinhole cameras, Rodrigues rotations and right- to left-handed export.

use alloc::format;
use alloc::string::String;

use nalgebra::{Matrix3, Matrix3x4, Vector4};

use crate::math::{abs, cos, sin};
use crate::{Error, Pose3D, Result, Vec2, Vec3};

const ORTHO_TOL: f64 = 1e-9;

/// One calibrated camera. `rotation` and `translation` map world to camera
/// coordinates: `x_cam = R * x_world + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub id: String,
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub width: u32,
    pub height: u32,
}

impl CameraView {
    pub fn new(
        id: impl Into<String>,
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vec3,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let cam = Self { id: id.into(), intrinsics, rotation, translation, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if k.iter().any(|v| !v.is_finite()) || self.rotation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Calibration(format!("camera {}: non-finite calibration", self.id)));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::Calibration(format!("camera {}: K is not upper-triangular", self.id)));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 || k[(2, 2)] <= 0.0 {
            return Err(Error::Calibration(format!("camera {}: K needs positive focal entries", self.id)));
        }
        check_rotation(&self.rotation).map_err(|e| Error::Calibration(format!("camera {}: {e}", self.id)))?;
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Calibration(format!("camera {}: non-finite translation", self.id)));
        }
        Ok(())
    }

    /// `P = K [R | t]`.
    pub fn projection_matrix(&self) -> Result<Matrix3x4<f64>> {
        self.validate()?;
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        Ok(self.intrinsics * rt)
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, point: &Vec3) -> f64 {
        (self.rotation * point + self.translation).z
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Optical axis direction in world coordinates.
    pub fn optical_axis(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn principal_point(&self) -> Vec2 {
        Vec2::new(self.intrinsics[(0, 2)], self.intrinsics[(1, 2)])
    }

    /// Pixel coordinates of a world point.
    pub fn project(&self, point: &Vec3) -> Result<Vec2> {
        let depth = self.depth(point);
        if depth <= 0.0 || !depth.is_finite() {
            return Err(Error::BehindCamera { depth });
        }
        let p = self.projection_matrix()? * Vector4::new(point.x, point.y, point.z, 1.0);
        Ok(Vec2::new(p.x / p.z, p.y / p.z))
    }

    /// Whether a pixel lies inside the image rectangle.
    pub fn contains(&self, px: &Vec2) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= self.width as f64 && px.y <= self.height as f64
    }
}

fn check_rotation(r: &Matrix3<f64>) -> core::result::Result<(), &'static str> {
    let rtr = r.transpose() * r;
    if (rtr - Matrix3::identity()).iter().any(|v| abs(*v) > ORTHO_TOL) {
        return Err("R is not orthonormal");
    }
    if abs(r.determinant() - 1.0) > ORTHO_TOL {
        return Err("R has det != +1");
    }
    Ok(())
}

/// Cross-product matrix `[a]_x` so that `[a]_x b = a x b`.
pub fn skew(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// `R = I + sin(angle) K + (1 - cos(angle)) K^2` with `K = [axis]_x`.
pub fn rodrigues_rotation(axis: &Vec3, angle: f64) -> Result<Matrix3<f64>> {
    let norm = axis.norm();
    if !norm.is_finite() || abs(norm - 1.0) > 1e-6 {
        return Err(Error::InvalidAxis { norm });
    }
    if !angle.is_finite() {
        return Err(Error::EngineConfig(format!("non-finite rotation angle {angle}")));
    }
    let k = skew(&(axis / norm));
    Ok(Matrix3::identity() + k * sin(angle) + k * k * (1.0 - cos(angle)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Right-handed world to left-handed engine frame: mirror one axis, then
/// rotate about `rodrigues_axis` and translate by `origin_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineFrameConfig {
    pub rodrigues_axis: Vec3,
    pub rodrigues_angle: f64,
    pub origin_offset: Vec3,
    pub mirror_axis: Axis,
}

impl Default for EngineFrameConfig {
    fn default() -> Self {
        Self { rodrigues_axis: Vec3::z(), rodrigues_angle: 0.0, origin_offset: Vec3::zeros(), mirror_axis: Axis::Z }
    }
}

impl EngineFrameConfig {
    /// Combined linear part `R * M`; its determinant is -1.
    pub fn linear(&self) -> Result<Matrix3<f64>> {
        if abs(self.rodrigues_axis.norm() - 1.0) > ORTHO_TOL {
            return Err(Error::EngineConfig(format!("rodrigues axis norm {} is not 1", self.rodrigues_axis.norm())));
        }
        if !self.origin_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::EngineConfig("non-finite origin offset".into()));
        }
        let r = rodrigues_rotation(&self.rodrigues_axis, self.rodrigues_angle)?;
        let mut m = Matrix3::identity();
        let i = self.mirror_axis.index();
        m[(i, i)] = -1.0;
        Ok(r * m)
    }

    pub fn apply(&self, p: &Vec3) -> Result<Vec3> {
        Ok(self.linear()? * p + self.origin_offset)
    }
}

/// Maps every joint into the engine frame. Bone lengths are preserved and
/// handedness flips.
pub fn to_engine_frame(pose: &Pose3D, cfg: &EngineFrameConfig) -> Result<Pose3D> {
    let lin = cfg.linear()?;
    Ok(pose.map_joints(|p| lin * p + cfg.origin_offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use core::f64::consts::FRAC_PI_2;

    fn identity_cam() -> CameraView {
        CameraView::new("c", Matrix3::identity(), Matrix3::identity(), Vec3::zeros(), 640, 480).unwrap()
    }

    #[test]
    fn identity_camera_projection_matrix() {
        let p = identity_cam().projection_matrix().unwrap();
        let mut expected = Matrix3x4::zeros();
        expected.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        assert_eq!(p, expected);
    }

    #[test]
    fn translated_origin_hits_principal_point() {
        let k = Matrix3::new(800.0, 0.0, 320.0, 0.0, 800.0, 240.0, 0.0, 0.0, 1.0);
        let cam = CameraView::new("c", k, Matrix3::identity(), Vec3::new(0.0, 0.0, 5.0), 640, 480).unwrap();
        let px = cam.project(&Vec3::zeros()).unwrap();
        assert_relative_eq!(px, Vec2::new(320.0, 240.0), epsilon = 1e-12);
        // any point on the optical axis
        let px = cam.project(&Vec3::new(0.0, 0.0, 2.5)).unwrap();
        assert_relative_eq!(px, cam.principal_point(), epsilon = 1e-12);
    }

    #[test]
    fn zero_depth_is_behind_camera() {
        let cam = identity_cam();
        assert!(matches!(cam.project(&Vec3::new(1.0, 1.0, 0.0)), Err(Error::BehindCamera { .. })));
        assert!(matches!(cam.project(&Vec3::new(1.0, 1.0, -2.0)), Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let mut cam = identity_cam();
        cam.rotation[(0, 0)] = 1.01;
        assert!(matches!(cam.projection_matrix(), Err(Error::Calibration(_))));
        let mut reflect = identity_cam();
        reflect.rotation[(2, 2)] = -1.0;
        assert!(matches!(reflect.validate(), Err(Error::Calibration(_))));
        let mut k = identity_cam();
        k.intrinsics[(1, 0)] = 0.5;
        assert!(k.validate().is_err());
    }

    #[test]
    fn rodrigues_basics() {
        assert_eq!(rodrigues_rotation(&Vec3::x(), 0.0).unwrap(), Matrix3::identity());
        let r = rodrigues_rotation(&Vec3::z(), FRAC_PI_2).unwrap();
        assert_relative_eq!(r * Vec3::x(), Vec3::y(), epsilon = 1e-15);
        assert!(matches!(rodrigues_rotation(&Vec3::zeros(), 1.0), Err(Error::InvalidAxis { .. })));
        assert!(rodrigues_rotation(&Vec3::new(0.0, 0.0, 1.1), 1.0).is_err());
    }

    #[test]
    fn engine_frame_mirror_and_offset() {
        let pose = Pose3D::new(vec![Vec3::new(1.0, 2.0, 3.0); crate::NUM_JOINTS], 0, 0.0);
        let out = to_engine_frame(&pose, &EngineFrameConfig::default()).unwrap();
        assert_eq!(out.joints[0], Vec3::new(1.0, 2.0, -3.0));

        let cfg = EngineFrameConfig { origin_offset: Vec3::new(0.5, -1.0, 2.0), ..Default::default() };
        let mirrored = to_engine_frame(&pose, &EngineFrameConfig::default()).unwrap();
        let shifted = to_engine_frame(&pose, &cfg).unwrap();
        for (a, b) in mirrored.joints.iter().zip(&shifted.joints) {
            assert_relative_eq!(b - a, cfg.origin_offset, epsilon = 1e-15);
        }
        assert_relative_eq!(cfg.linear().unwrap().determinant(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn engine_frame_rejects_bad_axis() {
        let cfg = EngineFrameConfig { rodrigues_axis: Vec3::new(0.0, 2.0, 0.0), ..Default::default() };
        assert!(matches!(cfg.linear(), Err(Error::EngineConfig(_))));
    }
}
