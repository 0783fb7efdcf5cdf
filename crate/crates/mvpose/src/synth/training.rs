//! Clean and noisy trajectory pairs for refiner training and evaluation.

use mvpose_core::refiner::Trajectory;
use mvpose_core::{Pose3D, Skeleton};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{synth_motion, MotionConfig};
use crate::{Error, Result};

/// Adds independent Gaussian noise of `sigma` metres to every coordinate.
pub fn add_joint_noise(poses: &[Pose3D], sigma: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Pose3D>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("noise sigma {sigma}: {e}")))?;
    Ok(poses
        .iter()
        .map(|p| {
            let mut q = p.clone();
            for j in &mut q.joints {
                for v in j.iter_mut() {
                    *v += normal.sample(rng);
                }
            }
            q
        })
        .collect())
}

/// One trajectory per `(motion, seed)`. The intermediate ground truth comes
/// from the same motion sampled at twice the frame rate.
pub fn refiner_trajectories(
    motions: &[MotionConfig],
    seeds: &[u64],
    sigma: f64,
    noise_seed: u64,
) -> Result<Vec<Trajectory>> {
    let skel = Skeleton::h36m();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut out = Vec::with_capacity(motions.len() * seeds.len());
    for m in motions {
        let double = MotionConfig { fps: 2.0 * m.fps, ..m.clone() };
        for &seed in seeds {
            let clean = synth_motion(&skel, m, seed)?;
            let fine = synth_motion(&skel, &double, seed)?;
            let intermediate = (0..clean.len()).map(|t| fine[(2 * t).saturating_sub(1)].clone()).collect();
            let noisy = add_joint_noise(&clean, sigma, &mut rng)?;
            out.push(Trajectory { clean, noisy, intermediate: Some(intermediate) });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::MotionKind;

    #[test]
    fn intermediate_frames_sit_halfway_in_time() {
        let m = MotionConfig { kind: MotionKind::ArmRaise, seconds: 1.0, ..Default::default() };
        let tr = refiner_trajectories(&[m], &[3], 0.02, 1).unwrap();
        let tr = &tr[0];
        assert_eq!(tr.clean.len(), 50);
        let mid = tr.intermediate.as_ref().unwrap();
        for t in 1..50 {
            assert!((mid[t].timestamp - (tr.clean[t].timestamp - 0.01)).abs() < 1e-12);
        }
        let resid: f64 = tr.noisy.iter().zip(&tr.clean).map(|(n, c)| (n.joints[5] - c.joints[5]).norm_squared()).sum();
        let rms_per_axis = (resid / (3.0 * 50.0)).sqrt();
        assert!((rms_per_axis - 0.02).abs() < 0.006, "{rms_per_axis}");
    }
}
