use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_unit_quat(rng: &mut ChaCha8Rng) -> Quaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return q.normalized();
        }
    }
}

#[test]
fn sixteen_views_at_radius_four() {
    let cfg = SphericalConfig::default();
    let poses = sample_sphere::<f64>(&cfg).unwrap();
    assert_eq!(poses.len(), 16);
    for p in &poses {
        assert!((p.center().norm() - 4.0).abs() < 1e-9);
    }
    // all sixteen centers are distinct
    for i in 0..16 {
        for j in 0..i {
            assert!((poses[i].center() - poses[j].center()).norm() > 1e-3);
        }
    }
}

#[test]
fn zero_angles_put_camera_on_positive_x() {
    let cfg = SphericalConfig {
        radius: 1.0,
        polar_angles: vec![0.0],
        azimuth_angles: vec![0.0],
        ..SphericalConfig::default()
    };
    let poses = sample_sphere::<f64>(&cfg).unwrap();
    assert_eq!(poses.len(), 1);
    assert!((poses[0].center() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
}

#[test]
fn scene_level_negates_forward_axes() {
    let obj = sample_sphere::<f64>(&SphericalConfig::default()).unwrap();
    let scn = sample_sphere::<f64>(&SphericalConfig {
        mode: ViewMode::SceneLevel,
        ..SphericalConfig::default()
    })
    .unwrap();
    for (a, b) in obj.iter().zip(&scn) {
        assert!((a.center() - b.center()).norm() < 1e-12);
        assert!((a.forward() + b.forward()).norm() < 1e-12);
    }
}

#[test]
fn object_level_axes_pass_through_target() {
    let cfg = SphericalConfig {
        target: [0.3, -0.2, 0.5],
        ..SphericalConfig::default()
    };
    let target = Vector3::from(cfg.target);
    for p in sample_sphere::<f64>(&cfg).unwrap() {
        let c = p.transform_point(&target);
        assert!(c.x.abs() < 1e-9 && c.y.abs() < 1e-9 && c.z > 0.0);
    }
}

#[test]
fn empty_angle_lists_are_rejected() {
    let cfg = SphericalConfig {
        polar_angles: vec![],
        ..SphericalConfig::default()
    };
    assert_eq!(sample_sphere::<f64>(&cfg), Err(GeomError::EmptyAngles));
    let cfg = SphericalConfig {
        polar_angles: vec![90.0],
        ..SphericalConfig::default()
    };
    assert!(matches!(
        sample_sphere::<f64>(&cfg),
        Err(GeomError::PolarOutOfRange(_))
    ));
}

#[test]
fn view_count_grids() {
    let base = SphericalConfig::default();
    for n in [8, 12, 16, 20] {
        assert_eq!(base.with_view_count(n).unwrap().n_views(), n);
    }
    let g8 = base.with_view_count(8).unwrap();
    assert_eq!((g8.polar_angles.len(), g8.azimuth_angles.len()), (2, 4));
    assert_eq!(base.with_view_count(16).unwrap(), base);
}

#[test]
fn canonical_look_at() {
    let p = Vector3::new(0.0, 0.0, 4.0);
    let pose = look_at(&p, &Vector3::zeros(), &Vector3::y()).unwrap();
    assert!((pose.forward() - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    let o = pose.transform_point(&Vector3::zeros());
    assert!((o - Vector3::new(0.0, 0.0, 4.0)).norm() < 1e-12);
    // image "down" is world -y
    let down = pose.rotation_matrix().row(1).transpose();
    assert!((down + Vector3::y()).norm() < 1e-12);
}

#[test]
fn look_at_parallel_up_is_degenerate() {
    let p = Vector3::new(0.0, 0.0, 4.0);
    assert_eq!(
        look_at(&p, &Vector3::zeros(), &Vector3::z()),
        Err(GeomError::DegenerateUp)
    );
}

#[test]
fn look_at_from_x_is_y_rotation_of_look_at_from_z() {
    let from_z = look_at(&Vector3::new(0.0, 0.0, 4.0), &Vector3::zeros(), &Vector3::y()).unwrap();
    let from_x = look_at(&Vector3::new(4.0, 0.0, 0.0), &Vector3::zeros(), &Vector3::y()).unwrap();
    let ry = Quaternion::from_axis_angle_deg(&Vector3::y(), 90.0).to_matrix();
    // camera-to-world rotations differ by the world rotation
    let lhs = from_x.rotation_matrix().transpose();
    let rhs = ry * from_z.rotation_matrix().transpose();
    assert!((lhs - rhs).norm() < 1e-12);
}

#[test]
fn look_at_is_orthonormal_for_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let p = Vector3::<f64>::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        let t = Vector3::new(rng.gen_range(-1.0..1.0), 0.0, rng.gen_range(-1.0..1.0));
        let Ok(pose) = look_at(&p, &t, &Vector3::y()) else {
            continue;
        };
        let r = pose.rotation_matrix();
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn rotation_error_cases() {
    let gt = Quaternion::<f64>::identity();
    assert_eq!(rotation_error_deg(&gt, &gt), 0.0);
    let q = Quaternion::<f64>::from_axis_angle_deg(&Vector3::new(1.0, 2.0, 3.0), 50.0);
    assert!(rotation_error_deg(&q, &q) < 1e-6);
    assert!(rotation_error_deg(&q.neg(), &q) < 1e-6);
    let z30 = Quaternion::from_axis_angle_deg(&Vector3::z(), 30.0);
    assert!((rotation_error_deg(&z30, &gt) - 30.0).abs() < 1e-9);
    let (e, flagged) = rotation_error_flagged(&z30.scale(2.0), &gt);
    assert!(flagged && (e - 30.0).abs() < 1e-9);
    assert!(!rotation_error_flagged(&z30, &gt).1);
}

#[test]
fn translation_error_cases() {
    let z = Vector3::<f64>::zeros();
    assert_eq!(translation_error(&z, &z), 0.0);
    assert_eq!(translation_error(&Vector3::new(3.0, 4.0, 0.0), &z), 5.0);
    let e: f64 = translation_error(&Vector3::new(1.1, 2.0, 0.0), &Vector3::new(1.0, 2.0, 0.0));
    assert!((e - 0.1).abs() < 1e-12);
}

#[test]
fn pose_loss_cases() {
    let gt = Pose::<f64>::identity();
    let w = LossWeights::default();
    assert_eq!((w.lambda_r, w.lambda_t), (1.0, 30.0));
    let pred = Pose::new(
        Quaternion::from_axis_angle_deg(&Vector3::x(), 2.0),
        Vector3::new(0.0, 0.1, 0.0),
    );
    assert!((pose_loss(&pred, &gt, &w) - 5.0).abs() < 1e-9);
    assert_eq!(pose_loss(&gt, &gt, &w), 0.0);
    let pred = Pose::new(Quaternion::identity(), Vector3::new(0.2, 0.0, 0.0));
    let w0 = LossWeights {
        lambda_r: 0.0,
        lambda_t: 30.0,
    };
    assert!((pose_loss(&pred, &gt, &w0) - 6.0).abs() < 1e-12);
}

#[test]
fn relative_pose_round_trip_on_sampled_views() {
    let poses = sample_sphere::<f64>(&SphericalConfig::default()).unwrap();
    for a in &poses {
        for b in &poses {
            let d = relative_pose(a, b);
            let back = compose(&d, a);
            assert!((back.to_matrix4() - b.to_matrix4()).norm() < 1e-9);
        }
    }
}

#[test]
fn quaternion_matrix_round_trip_thousand_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let q = random_unit_quat(&mut rng);
        let m = q.to_matrix();
        let back = Quaternion::from_matrix(&m);
        assert!((back.to_matrix() - m).norm() < 1e-12);
        assert!((back.dot(&q).abs() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn f32_paths_agree_with_f64() {
    let p64 = sample_sphere::<f64>(&SphericalConfig::default()).unwrap();
    let p32 = sample_sphere::<f32>(&SphericalConfig::default()).unwrap();
    for (a, b) in p64.iter().zip(&p32) {
        assert!(rotation_error_deg(&a.rotation, &b.rotation.cast()) < 1e-2);
        assert!((a.center() - b.center().map(f64::from)).norm() < 1e-5);
    }
}

#[test]
fn perturbation_angle_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let base = sample_sphere::<f64>(&SphericalConfig::default()).unwrap();
    for i in 0..200 {
        let b = base[i % 16];
        let (q, off, mag) = sample_perturbation(&mut rng, [20.0, 40.0], [-0.2, 0.2]);
        assert!((20.0..=40.0).contains(&mag));
        assert!(off.iter().all(|v| v.abs() <= 0.2));
        let p = perturb_pose(&b, &q, &off);
        let e = rotation_error_deg(&p.rotation, &b.rotation);
        assert!((e - mag).abs() < 1e-6, "{e} vs {mag}");
        let moved = q.rotate(&b.center()) + off;
        assert!((p.center() - moved).norm() < 1e-9);
    }
    let (q, off, _) = sample_perturbation(&mut rng, [0.0, 0.0], [0.0, 0.0]);
    let p = perturb_pose(&base[3], &q, &off);
    assert!((p.to_matrix4() - base[3].to_matrix4()).norm() < 1e-12);
}

proptest! {
    #[test]
    fn rotation_error_is_a_symmetric_sign_invariant_metric(
        a in proptest::array::uniform4(-1.0f64..1.0),
        b in proptest::array::uniform4(-1.0f64..1.0),
    ) {
        let qa = Quaternion::new(a[0], a[1], a[2], a[3]);
        let qb = Quaternion::new(b[0], b[1], b[2], b[3]);
        prop_assume!(qa.norm() > 0.1 && qb.norm() > 0.1);
        let (qa, qb) = (qa.normalized(), qb.normalized());
        let e = rotation_error_deg(&qa, &qb);
        prop_assert!((0.0..=180.0).contains(&e));
        prop_assert!((e - rotation_error_deg(&qb, &qa)).abs() < 1e-9);
        prop_assert!((e - rotation_error_deg(&qa.neg(), &qb)).abs() < 1e-9);
        prop_assert!((e - rotation_error_deg(&qa, &qb.neg())).abs() < 1e-9);
        prop_assert!(rotation_error_deg(&qa, &qa) < 1e-6);
    }
}
