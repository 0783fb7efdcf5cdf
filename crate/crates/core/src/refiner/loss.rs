//! Position plus velocity training loss over the two emitted frames.
//!
//! In time order the frames around one window are: the previously emitted
//! current frame (t - 1), the intermediate frame (t - 1/2) and the current
//! frame (t). Velocities are taken between consecutive emitted frames.

use super::RefinedPair;
use crate::math::{abs, signum};
use crate::{Error, Pose3D, Result, NUM_JOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityForm {
    /// `|(G_t - G_{t-1}) - (Y_t - Y_{t-1})|`, zero when prediction equals truth.
    #[default]
    Difference,
    /// `|G_t - G_{t-1}| * |Y_t - Y_{t-1}|`, kept for comparison only.
    LiteralProduct,
}

/// Loss of one coordinate channel and its gradient with respect to
/// `[y_current, y_intermediate, y_prev]`.
///
/// `g` holds the matching ground truth, `g_prev` / `y_prev` the ground truth
/// and emitted prediction of the previous frame.
pub fn channel_loss(
    y: [f64; 2],
    g: [f64; 2],
    g_prev: f64,
    y_prev: f64,
    alpha: f64,
    form: VelocityForm,
) -> (f64, [f64; 3]) {
    let [y_cur, y_int] = y;
    let [g_cur, g_int] = g;

    let pos = 0.5 * (abs(y_cur - g_cur) + abs(y_int - g_int));
    let d_pos = [0.5 * signum(y_cur - g_cur), 0.5 * signum(y_int - g_int)];

    // (dG, dY) for the steps prev -> int and int -> cur
    let steps = [(g_int - g_prev, y_int - y_prev), (g_cur - g_int, y_cur - y_int)];
    let mut vel = 0.0;
    let mut d_step = [0.0; 2];
    for (k, &(dg, dy)) in steps.iter().enumerate() {
        match form {
            VelocityForm::Difference => {
                vel += abs(dy - dg);
                d_step[k] = signum(dy - dg);
            }
            VelocityForm::LiteralProduct => {
                vel += abs(dg) * abs(dy);
                d_step[k] = abs(dg) * signum(dy);
            }
        }
    }
    vel *= 0.5;
    // step 0 depends on y_int (+) and y_prev (-), step 1 on y_cur (+) and y_int (-)
    let d_vel = [0.5 * d_step[1], 0.5 * (d_step[0] - d_step[1]), -0.5 * d_step[0]];

    let beta = 1.0 - alpha;
    (
        alpha * pos + beta * vel,
        [alpha * d_pos[0] + beta * d_vel[0], alpha * d_pos[1] + beta * d_vel[1], beta * d_vel[2]],
    )
}

/// `alpha * L_pos + (1 - alpha) * L_vel`, averaged over 2 frames and 51
/// channels. Units follow the poses (meters).
pub fn loss_total(
    pred: &RefinedPair,
    gt: &RefinedPair,
    prev_gt: &Pose3D,
    prev_pred: &Pose3D,
    alpha: f64,
    form: VelocityForm,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::LossShape(alloc::format!("alpha_loss {alpha} outside [0, 1]")));
    }
    let poses = [&pred.refined, &pred.intermediate, &gt.refined, &gt.intermediate, prev_gt, prev_pred];
    if let Some(p) = poses.iter().find(|p| p.joints.len() != NUM_JOINTS) {
        return Err(Error::LossShape(alloc::format!("pose with {} joints, expected {NUM_JOINTS}", p.joints.len())));
    }
    let mut total = 0.0;
    for j in 0..NUM_JOINTS {
        for a in 0..3 {
            let (l, _) = channel_loss(
                [pred.refined.joints[j][a], pred.intermediate.joints[j][a]],
                [gt.refined.joints[j][a], gt.intermediate.joints[j][a]],
                prev_gt.joints[j][a],
                prev_pred.joints[j][a],
                alpha,
                form,
            );
            total += l;
        }
    }
    Ok(total / (3 * NUM_JOINTS) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;
    use approx::assert_relative_eq;

    fn constant(v: Vec3) -> Pose3D {
        Pose3D::new(alloc::vec![v; NUM_JOINTS], 0, 0.0)
    }

    fn pair(a: Vec3, b: Vec3) -> RefinedPair {
        RefinedPair { refined: constant(a), intermediate: constant(b) }
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let gt = pair(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.0, 0.25, 0.3));
        let prev = constant(Vec3::new(-0.1, 0.3, 0.3));
        for form in [VelocityForm::Difference] {
            for alpha in [0.0, 0.5, 1.0] {
                assert_eq!(loss_total(&gt, &gt, &prev, &prev, alpha, form).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn uniform_two_millimeter_offset() {
        let gt = pair(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.0, 0.25, 0.3));
        let off = Vec3::new(0.002, -0.002, 0.002);
        let pred = pair(gt.refined.joints[0] + off, gt.intermediate.joints[0] + off);
        let prev = constant(Vec3::zeros());
        let l = loss_total(&pred, &gt, &prev, &prev, 1.0, VelocityForm::Difference).unwrap();
        assert_relative_eq!(l, 0.002, epsilon = 1e-15);
    }

    #[test]
    fn constant_sequences_have_no_velocity_loss() {
        let gt = pair(Vec3::new(1.0, 1.0, 1.0), Vec3::new(1.0, 1.0, 1.0));
        let pred = pair(Vec3::new(0.5, 0.0, 2.0), Vec3::new(0.5, 0.0, 2.0));
        let l = loss_total(&pred, &gt, &gt.refined, &pred.refined, 0.0, VelocityForm::Difference).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn literal_product_is_not_zero_at_optimum() {
        let (l, _) = channel_loss([1.0, 0.5], [1.0, 0.5], 0.0, 0.0, 0.0, VelocityForm::LiteralProduct);
        assert!(l > 0.0);
    }

    #[test]
    fn channel_gradient_matches_finite_differences() {
        let g = [0.31, -0.12];
        let y = [0.25, -0.02];
        for form in [VelocityForm::Difference, VelocityForm::LiteralProduct] {
            let f = |v: [f64; 3]| channel_loss([v[0], v[1]], g, 0.4, v[2], 0.3, form).0;
            let x = [y[0], y[1], 0.1];
            let (_, grad) = channel_loss(y, g, 0.4, x[2], 0.3, form);
            for k in 0..3 {
                let eps = 1e-6;
                let mut hi = x;
                let mut lo = x;
                hi[k] += eps;
                lo[k] -= eps;
                let num = (f(hi) - f(lo)) / (2.0 * eps);
                assert_relative_eq!(grad[k], num, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn bad_alpha_or_shape() {
        let p = pair(Vec3::zeros(), Vec3::zeros());
        let z = constant(Vec3::zeros());
        assert!(matches!(loss_total(&p, &p, &z, &z, 1.5, VelocityForm::Difference), Err(Error::LossShape(_))));
        let mut short = z.clone();
        short.joints.pop();
        assert!(loss_total(&p, &p, &short, &z, 0.5, VelocityForm::Difference).is_err());
    }
}
