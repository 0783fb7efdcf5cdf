use approx::assert_relative_eq;
use mvpose_core::camera::{rodrigues_rotation, CameraView};
use mvpose_core::heatmap::{soft_argmax, spatial_softmax, Heatmap};
use mvpose_core::ik::{self, Chain, IkConfig, IkStatus};
use mvpose_core::metrics::{mpjpe, p_mpjpe};
use mvpose_core::muscle::{classify, joint_velocity, muscle_levels, MuscleMap, Thresholds};
use mvpose_core::refiner::{init_weights, Centering, PoseWindow, Preprocess, TemporalRefiner};
use mvpose_core::skeleton::bone_lengths;
use mvpose_core::tracker::{iou, BBox};
use mvpose_core::triangulation::{assemble_dlt, triangulate_joint, JointObservation};
use mvpose_core::{Pose3D, Skeleton, Vec2, Vec3, NUM_JOINTS};
use nalgebra::{Matrix3, Unit, UnitQuaternion};
use proptest::prelude::*;
use rand::SeedableRng;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn unit_axis() -> impl Strategy<Value = Vec3> {
    vec3(1.0).prop_filter("non-degenerate axis", |v| v.norm() > 0.1).prop_map(|v| v.normalize())
}

fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
    (unit_axis(), -3.1..3.1f64).prop_map(|(a, t)| rodrigues_rotation(&a, t).unwrap())
}

fn pose(range: f64) -> impl Strategy<Value = Pose3D> {
    proptest::collection::vec(vec3(range), NUM_JOINTS).prop_map(|j| Pose3D::new(j, 0, 0.0))
}

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..500.0f64, 0.0..500.0f64, 1.0..200.0f64, 1.0..200.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h, 0.9))
}

fn ring_camera(id: &str, yaw: f64, pitch: f64) -> CameraView {
    let r = rodrigues_rotation(&Vec3::x(), pitch).unwrap() * rodrigues_rotation(&Vec3::y(), yaw).unwrap();
    let k = Matrix3::new(1000.0, 0.0, 500.0, 0.0, 1000.0, 500.0, 0.0, 0.0, 1.0);
    CameraView::new(id, k, r, Vec3::new(0.0, 0.0, 3.0), 1000, 1000).unwrap()
}

fn rig() -> Vec<CameraView> {
    vec![
        ring_camera("a", 0.0, 0.1),
        ring_camera("b", 1.3, -0.05),
        ring_camera("c", 2.9, 0.0),
        ring_camera("d", -1.6, 0.08),
    ]
}

fn observe(cams: &[CameraView], x: &Vec3, weights: &[f64]) -> Vec<JointObservation> {
    cams.iter().zip(weights).map(|(c, w)| JointObservation::new(c.id.clone(), c.project(x).unwrap(), *w)).collect()
}

proptest! {
    #[test]
    fn bone_lengths_survive_rigid_motion(p in pose(1.0), r in rotation(), t in vec3(5.0)) {
        let skel = Skeleton::h36m();
        let moved = p.map_joints(|j| r * j + t);
        let a = bone_lengths(&p, &skel).unwrap();
        let b = bone_lengths(&moved, &skel).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn rodrigues_matches_quaternion(axis in unit_axis(), angle in -6.3..6.3f64) {
        let r = rodrigues_rotation(&axis, angle).unwrap();
        let q = UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle).to_rotation_matrix();
        prop_assert!((r - q.matrix()).abs().max() < 1e-12);
        let back = rodrigues_rotation(&axis, -angle).unwrap();
        prop_assert!((r * back - Matrix3::identity()).abs().max() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox(), shift in vec3(300.0)) {
        let ab = iou(&a, &b).unwrap();
        prop_assert_eq!(ab, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mv = |x: &BBox| BBox::new(x.x1 + shift.x, x.y1 + shift.y, x.x2 + shift.x, x.y2 + shift.y, x.score);
        prop_assert!((iou(&mv(&a), &mv(&b)).unwrap() - ab).abs() < 1e-9);
    }

    #[test]
    fn disjoint_boxes_have_zero_iou(a in bbox(), gap in 0.0..50.0f64) {
        let w = a.width();
        let b = BBox::new(a.x2 + gap, a.y1, a.x2 + gap + w, a.y2, 0.5);
        prop_assert_eq!(iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn softmax_ignores_constant_shift(
        vals in proptest::collection::vec(-3.0..3.0f64, 48),
        c in -50.0..50.0f64,
        alpha in 0.0..20.0f64,
    ) {
        let a = Heatmap::new(1, 8, 6, vals.clone()).unwrap();
        let b = Heatmap::new(1, 8, 6, vals.iter().map(|v| v + c).collect()).unwrap();
        let (na, nb) = (spatial_softmax(&a, alpha).unwrap(), spatial_softmax(&b, alpha).unwrap());
        for (x, y) in na.values.iter().zip(&nb.values) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((na.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn soft_argmax_shifts_with_content(
        vals in proptest::collection::vec(0.0..1.0f64, 25),
        dx in 0usize..10,
        dy in 0usize..7,
    ) {
        let total: f64 = vals.iter().sum::<f64>() + 1e-9;
        let embed = |ox: usize, oy: usize| {
            let mut hm = Heatmap::zeros(1, 16, 12);
            for r in 0..5 {
                for c in 0..5 {
                    hm.values[(oy + r) * 16 + ox + c] = (vals[r * 5 + c] + 1e-9 / 25.0) / total;
                }
            }
            hm
        };
        let base = soft_argmax(&embed(0, 0)).unwrap()[0];
        let moved = soft_argmax(&embed(dx, dy)).unwrap()[0];
        prop_assert!((moved - base - Vec2::new(dx as f64, dy as f64)).norm() < 1e-9);
    }

    #[test]
    fn triangulation_ignores_uniform_weight_scale(x in vec3(0.8), k in 0.05..1.0f64) {
        let cams = rig();
        let w = [0.9, 0.5, 1.0, 0.7];
        let scaled: Vec<f64> = w.iter().map(|v| v * k).collect();
        let a = triangulate_joint(&assemble_dlt(&cams, &observe(&cams, &x, &w)).unwrap()).unwrap();
        let b = triangulate_joint(&assemble_dlt(&cams, &observe(&cams, &x, &scaled)).unwrap()).unwrap();
        prop_assert!((a.position - b.position).norm() < 1e-9);
        prop_assert!((a.position - x).norm() < 1e-9);
    }

    #[test]
    fn triangulation_is_rigidly_equivariant(x in vec3(0.5), r in rotation(), t in vec3(0.3)) {
        let cams = rig();
        // world' = R world + t, cameras re-expressed in world'
        let moved: Vec<CameraView> = cams
            .iter()
            .map(|c| {
                let rot = c.rotation * r.transpose();
                CameraView::new(c.id.clone(), c.intrinsics, rot, c.translation - rot * t, c.width, c.height).unwrap()
            })
            .collect();
        let w = [1.0; 4];
        let obs = observe(&cams, &x, &w);
        let a = triangulate_joint(&assemble_dlt(&cams, &obs).unwrap()).unwrap();
        let b = triangulate_joint(&assemble_dlt(&moved, &obs).unwrap()).unwrap();
        prop_assert!((b.position - (r * a.position + t)).norm() < 1e-8);
    }

    #[test]
    fn fabrik_preserves_lengths_and_is_equivariant(
        dirs in proptest::collection::vec(unit_axis(), 4),
        lens in proptest::collection::vec(0.1..1.0f64, 4),
        target in vec3(2.5),
        r in rotation(),
        t in vec3(3.0),
    ) {
        let mut pts = vec![Vec3::zeros()];
        for (d, l) in dirs.iter().zip(&lens) {
            let last = *pts.last().unwrap();
            pts.push(last + d * *l);
        }
        let chain = Chain::from_positions(pts.clone()).unwrap();
        let cfg = IkConfig::default();
        let sol = ik::solve(&chain, &target, &cfg).unwrap();
        for (w, d) in sol.positions.windows(2).zip(&chain.lengths) {
            prop_assert!(((w[1] - w[0]).norm() - d).abs() <= 1e-6 * d);
        }
        prop_assert_eq!(sol.positions[0], chain.anchor);

        let moved = Chain::from_positions(pts.iter().map(|p| r * p + t).collect()).unwrap();
        let sol2 = ik::solve(&moved, &(r * target + t), &cfg).unwrap();
        // rounding can only matter when an iterate lands on the tolerance boundary
        if sol.iterations != sol2.iterations {
            prop_assert!((sol.error.min(sol2.error) - cfg.tol).abs() < 1e-9);
            return Ok(());
        }
        prop_assert_eq!(sol.status, sol2.status);
        for (a, b) in sol.positions.iter().zip(&sol2.positions) {
            prop_assert!((r * a + t - b).norm() < 1e-9);
        }
    }

    #[test]
    fn unreachable_targets_give_straight_chains(
        lens in proptest::collection::vec(0.1..1.0f64, 3),
        dir in unit_axis(),
        extra in 0.01..3.0f64,
    ) {
        let mut pts = vec![Vec3::zeros()];
        for l in &lens {
            let last = *pts.last().unwrap();
            pts.push(last + Vec3::new(0.0, 0.0, *l));
        }
        let chain = Chain::from_positions(pts).unwrap();
        let target = dir * (chain.total_length() + extra);
        let sol = ik::solve(&chain, &target, &IkConfig::default()).unwrap();
        prop_assert_eq!(sol.status, IkStatus::Unreachable);
        for p in &sol.positions {
            prop_assert!(p.cross(&dir).norm() < 1e-9 && p.dot(&dir) >= -1e-12);
        }
    }

    #[test]
    fn classification_is_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let th = Thresholds::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(classify(lo, &th).unwrap().level <= classify(hi, &th).unwrap().level);
    }

    #[test]
    fn velocity_is_antisymmetric(a in vec3(2.0), b in vec3(2.0), dt in 0.001..0.1f64) {
        prop_assert_eq!(joint_velocity(&a, &b, dt).unwrap(), -joint_velocity(&b, &a, dt).unwrap());
    }

    #[test]
    fn muscle_levels_ignore_shared_translation(prev in pose(1.0), cur_off in vec3(0.01), t in vec3(5.0)) {
        let mut cur = prev.map_joints(|j| j + cur_off);
        cur.timestamp = 0.02;
        let map = MuscleMap::default();
        let a = muscle_levels(&prev, &cur, &map, 0.02).unwrap();
        let b = muscle_levels(&prev.map_joints(|j| j + t), &cur.map_joints(|j| j + t), &map, 0.02).unwrap();
        for (x, y) in a.muscles.iter().zip(&b.muscles) {
            prop_assert_eq!(x.intensity.level, y.intensity.level);
            prop_assert!((x.intensity.speed - y.intensity.speed).abs() < 1e-9);
        }
    }

    #[test]
    fn p_mpjpe_never_exceeds_mpjpe(a in pose(1.0), b in pose(1.0)) {
        prop_assert!(p_mpjpe(&a, &b).unwrap() <= mpjpe(&a, &b).unwrap() + 1e-9);
        prop_assert!((mpjpe(&a, &b).unwrap() - mpjpe(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mpjpe_is_rigid_invariant(a in pose(1.0), b in pose(1.0), r in rotation(), t in vec3(5.0)) {
        let e = mpjpe(&a, &b).unwrap();
        let moved = mpjpe(&a.map_joints(|j| r * j + t), &b.map_joints(|j| r * j + t)).unwrap();
        prop_assert!((e - moved).abs() < 1e-9);
    }
}

#[test]
fn refiner_output_ignores_frames_after_current() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let w = init_weights(16, Preprocess { centering: Centering::LastFrame, scale: 10.0 }, &mut rng);
    let frame = |i: u64, x: f64| Pose3D::new(vec![Vec3::new(x, 0.1 * i as f64, 1.0); NUM_JOINTS], i, i as f64 * 0.02);
    let mut a = TemporalRefiner::new(w.clone()).unwrap();
    let mut b = TemporalRefiner::new(w).unwrap();
    let mut out_a = Vec::new();
    let mut out_b = Vec::new();
    for i in 0..12 {
        let x = 0.01 * i as f64;
        out_a.push(a.push(frame(i, x)).unwrap().1);
        // identical history, different frames from 10 on
        out_b.push(b.push(frame(i, if i >= 10 { x + 1.0 } else { x })).unwrap().1);
    }
    assert_eq!(out_a[..10], out_b[..10]);
    assert_ne!(out_a[10], out_b[10]);
    let mut w = PoseWindow::new();
    assert!(!w.push(frame(0, 0.0)).ready);
}

#[test]
fn rodrigues_axis_is_fixed() {
    let axis = Vec3::new(1.0, -2.0, 0.5).normalize();
    assert_relative_eq!(rodrigues_rotation(&axis, 1.1).unwrap() * axis, axis, epsilon = 1e-14);
}
