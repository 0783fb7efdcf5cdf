//! Keypoint decoding from per-joint heatmaps.
//!
//! Each joint plane is normalized with a temperature-scaled spatial softmax
//! and reduced to a sub-pixel location by soft-argmax, the expectation of
//! cell coordinates under the normalized plane. Cell `(u, v)` is column `u`,
//! row `v`, with cell `(0, 0)` centered at coordinate `(0, 0)`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math::{abs, exp};
use crate::tracker::BBox;
use crate::{Error, Pose2D, Result, Vec2, NUM_JOINTS};

pub const DEFAULT_ALPHA: f64 = 100.0;

/// `joints` planes of `height` rows by `width` columns, stored joint-major,
/// then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub joints: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn new(joints: usize, width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let hm = Self { joints, width, height, values };
        hm.check_shape()?;
        Ok(hm)
    }

    pub fn zeros(joints: usize, width: usize, height: usize) -> Self {
        Self { joints, width, height, values: alloc::vec![0.0; joints * width * height] }
    }

    fn check_shape(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidHeatmap(alloc::format!("empty plane {}x{}", self.width, self.height)));
        }
        if self.values.len() != self.joints * self.width * self.height {
            return Err(Error::InvalidHeatmap(alloc::format!(
                "{} values for {}x{}x{}",
                self.values.len(),
                self.joints,
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn plane(&self, joint: usize) -> &[f64] {
        let n = self.plane_len();
        &self.values[joint * n..(joint + 1) * n]
    }

    pub fn plane_mut(&mut self, joint: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.values[joint * n..(joint + 1) * n]
    }

    /// Largest raw value of each joint plane.
    pub fn maxima(&self) -> Vec<f64> {
        (0..self.joints).map(|j| self.plane(j).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }
}

/// `H'(r) = exp(alpha H(r)) / sum_r exp(alpha H(r))` per joint plane,
/// evaluated with the plane maximum subtracted.
pub fn spatial_softmax(hm: &Heatmap, alpha: f64) -> Result<Heatmap> {
    hm.check_shape()?;
    if !alpha.is_finite() {
        return Err(Error::InvalidHeatmap(alloc::format!("non-finite alpha {alpha}")));
    }
    if let Some(i) = hm.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidHeatmap(alloc::format!("non-finite value at index {i}")));
    }
    let mut out = hm.clone();
    for j in 0..hm.joints {
        let plane = out.plane_mut(j);
        let peak = plane.iter().map(|v| alpha * v).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in plane.iter_mut() {
            *v = exp(alpha * *v - peak);
            sum += *v;
        }
        for v in plane.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Probability-weighted mean cell coordinate of each normalized plane.
pub fn soft_argmax(hm: &Heatmap) -> Result<Vec<Vec2>> {
    hm.check_shape()?;
    let mut out = Vec::with_capacity(hm.joints);
    for j in 0..hm.joints {
        let plane = hm.plane(j);
        let sum: f64 = plane.iter().sum();
        if !sum.is_finite() || abs(sum - 1.0) > 1e-3 || plane.iter().any(|v| *v < 0.0) {
            return Err(Error::NotNormalized { joint: j, sum });
        }
        let (mut u, mut v) = (0.0, 0.0);
        for (row, cells) in plane.chunks_exact(hm.width).enumerate() {
            let mut row_mass = 0.0;
            for (col, p) in cells.iter().enumerate() {
                u += col as f64 * p;
                row_mass += p;
            }
            v += row as f64 * row_mass;
        }
        out.push(Vec2::new(u, v));
    }
    Ok(out)
}

/// Softmax (unless `prenormalized`) then soft-argmax for 17 joints.
/// Confidence is the normalized plane's peak value.
pub fn keypoints_from_heatmaps(
    hm: &Heatmap,
    alpha: f64,
    prenormalized: bool,
    camera_id: impl Into<String>,
    frame_index: u64,
) -> Result<Pose2D> {
    if hm.joints != NUM_JOINTS {
        return Err(Error::Topology { expected: NUM_JOINTS, found: hm.joints });
    }
    let normalized;
    let planes = if prenormalized {
        hm
    } else {
        normalized = spatial_softmax(hm, alpha)?;
        &normalized
    };
    let joints = soft_argmax(planes)?;
    let confidence = planes.maxima().into_iter().map(|c| c.clamp(0.0, 1.0)).collect();
    Ok(Pose2D::new(joints, confidence, camera_id, frame_index))
}

/// Affine map between heatmap cells of a person crop and full-image pixels.
///
/// The crop spans the box `[x1, x2] x [y1, y2]`; heatmap cell `u` covers the
/// pixel interval `x1 + [u, u + 1) * box_width / width`, so its center is at
/// `x1 + (u + 0.5) * box_width / width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropTransform {
    pub x1: f64,
    pub y1: f64,
    pub scale_x: f64,
    pub scale_y: f64,
}

impl CropTransform {
    pub fn new(bbox: &BBox, width: usize, height: usize) -> Result<Self> {
        bbox.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::InvalidHeatmap(alloc::format!("empty plane {width}x{height}")));
        }
        Ok(Self {
            x1: bbox.x1,
            y1: bbox.y1,
            scale_x: bbox.width() / width as f64,
            scale_y: bbox.height() / height as f64,
        })
    }

    pub fn to_image(&self, cell: &Vec2) -> Vec2 {
        Vec2::new(self.x1 + (cell.x + 0.5) * self.scale_x, self.y1 + (cell.y + 0.5) * self.scale_y)
    }

    pub fn to_cell(&self, px: &Vec2) -> Vec2 {
        Vec2::new((px.x - self.x1) / self.scale_x - 0.5, (px.y - self.y1) / self.scale_y - 0.5)
    }
}

/// Maps crop-local keypoints back into image pixels.
pub fn uncrop(pose: &Pose2D, crop: &CropTransform) -> Pose2D {
    Pose2D { joints: pose.joints.iter().map(|c| crop.to_image(c)).collect(), ..pose.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn point_mass(w: usize, h: usize, u: usize, v: usize) -> Heatmap {
        let mut hm = Heatmap::zeros(1, w, h);
        hm.values[v * w + u] = 1.0;
        hm
    }

    #[test]
    fn zero_alpha_gives_uniform_plane() {
        let hm = Heatmap::new(1, 4, 3, (0..12).map(|i| i as f64).collect()).unwrap();
        let n = spatial_softmax(&hm, 0.0).unwrap();
        for v in &n.values {
            assert_relative_eq!(*v, 1.0 / 12.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn dominant_cell_takes_all_mass() {
        let mut hm = Heatmap::new(1, 5, 5, vec![-10.0; 25]).unwrap();
        hm.values[7] = 10.0;
        let n = spatial_softmax(&hm, 1.0).unwrap();
        assert!(abs(n.values[7] - 1.0) < 1e-6);
        assert_relative_eq!(n.values.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn huge_values_do_not_overflow() {
        let hm = Heatmap::new(1, 3, 1, vec![1e6, 1e6 - 1.0, -1e6]).unwrap();
        let n = spatial_softmax(&hm, 100.0).unwrap();
        assert!(n.values.iter().all(|v| v.is_finite()));
        assert_relative_eq!(n.values.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nan_rejected() {
        let hm = Heatmap::new(1, 2, 1, vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(spatial_softmax(&hm, 1.0), Err(Error::InvalidHeatmap(_))));
    }

    #[test]
    fn soft_argmax_point_mass_and_uniform() {
        assert_eq!(soft_argmax(&point_mass(8, 8, 3, 5)).unwrap()[0], Vec2::new(3.0, 5.0));
        let uniform = Heatmap::new(1, 5, 5, vec![1.0 / 25.0; 25]).unwrap();
        assert_relative_eq!(soft_argmax(&uniform).unwrap()[0], Vec2::new(2.0, 2.0), epsilon = 1e-12);
        let raw = Heatmap::new(1, 2, 1, vec![3.0, 4.0]).unwrap();
        assert!(matches!(soft_argmax(&raw), Err(Error::NotNormalized { joint: 0, .. })));
    }

    #[test]
    fn keypoints_need_seventeen_planes() {
        let hm = Heatmap::zeros(3, 4, 4);
        assert!(matches!(
            keypoints_from_heatmaps(&hm, 1.0, false, "c", 0),
            Err(Error::Topology { expected: 17, found: 3 })
        ));
    }

    #[test]
    fn keypoints_from_point_masses_and_uniform() {
        let (w, h) = (16, 12);
        let mut hm = Heatmap::zeros(NUM_JOINTS, w, h);
        for j in 0..NUM_JOINTS {
            hm.plane_mut(j)[(j % h) * w + (j % w)] = 1.0;
        }
        let pose = keypoints_from_heatmaps(&hm, DEFAULT_ALPHA, true, "c", 4).unwrap();
        for j in 0..NUM_JOINTS {
            assert_eq!(pose.joints[j], Vec2::new((j % w) as f64, (j % h) as f64));
            assert_eq!(pose.confidence[j], 1.0);
        }
        let flat = Heatmap::zeros(NUM_JOINTS, 5, 5);
        let pose = keypoints_from_heatmaps(&flat, DEFAULT_ALPHA, false, "c", 4).unwrap();
        for j in 0..NUM_JOINTS {
            assert_relative_eq!(pose.joints[j], Vec2::new(2.0, 2.0), epsilon = 1e-12);
            assert_relative_eq!(pose.confidence[j], 1.0 / 25.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn crop_transform_round_trip() {
        let crop = CropTransform::new(&BBox::new(100.0, 50.0, 164.0, 178.0, 1.0), 64, 64).unwrap();
        let px = Vec2::new(123.4, 99.9);
        assert_relative_eq!(crop.to_image(&crop.to_cell(&px)), px, epsilon = 1e-12);
        assert_relative_eq!(crop.to_image(&Vec2::new(0.0, 0.0)), Vec2::new(100.5, 51.0), epsilon = 1e-12);
    }
}
