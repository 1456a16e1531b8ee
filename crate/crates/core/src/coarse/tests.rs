use nalgebra::Vector3;
use splatpose_nn::Tensor;

use super::*;
use crate::geom::{rotation_error_deg, sample_sphere, Pose, Quaternion, SphericalConfig};
use crate::render::Image;
use crate::scene::{generate_synthetic, SceneStyle};

fn tiny() -> CoarseNetConfig {
    CoarseNetConfig {
        image_size: 16,
        patch_size: 8,
        embed_dim: 16,
        d_k: 16,
        ffn_hidden: 24,
        n_views: 4,
        pose_embed_dim: 16,
        wpm_hidden: 8,
    }
}

// four views over one quadrant: opposite views make the fused pose an
// average of near-antipodal candidates, which a tiny net cannot escape in
// a hundred steps
fn tiny_sampling() -> SphericalConfig {
    SphericalConfig {
        polar_angles: vec![-30.0, 30.0],
        azimuth_angles: vec![0.0, 90.0],
        ..SphericalConfig::default()
    }
}

fn pose_at(i: usize) -> Pose<f64> {
    sample_sphere::<f64>(&SphericalConfig::default()).unwrap()[i]
}

#[test]
fn default_config_token_count() {
    let c = CoarseNetConfig::default();
    assert_eq!((c.image_size, c.patch_size, c.embed_dim, c.d_k, c.ffn_hidden, c.n_views), (64, 8, 128, 128, 256, 16));
    let net = CoarseNet::new(c, 1).unwrap();
    let img = Image::filled(64, 64, [0.2, 0.4, 0.6]);
    let tok = encode_image(&img, &net).unwrap();
    assert_eq!(tok.shape(), &[64, 128]);
}

#[test]
fn bad_configs_and_sizes_rejected() {
    let mut c = tiny();
    c.patch_size = 5;
    assert!(matches!(CoarseNet::new(c, 0), Err(CoarseError::Config(_))));
    let net = CoarseNet::new(tiny(), 0).unwrap();
    assert!(matches!(
        encode_image(&Image::filled(20, 20, [0.0; 3]), &net),
        Err(CoarseError::ImageSize { expected: 16, .. })
    ));
}

#[test]
fn constant_image_tokens_agree_before_position_embedding() {
    let net = CoarseNet::new(tiny(), 3).unwrap();
    let tok = encode_image(&Image::filled(16, 16, [0.9, 0.1, 0.3]), &net).unwrap();
    let pos = net.params.get(net.params.id("enc.pos").unwrap());
    let (n, d) = tok.dims2().unwrap();
    for r in 1..n {
        for c in 0..d {
            let a = tok.get2(r, c) - pos.get2(r, c);
            let b = tok.get2(0, c) - pos.get2(0, c);
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn distinct_renders_give_distinct_tokens() {
    let net = CoarseNet::new(tiny(), 3).unwrap();
    let scene = generate_synthetic(7, 300, SceneStyle::Textured).unwrap();
    let r = crate::render::Rasterizer::default();
    let a = render_small(&r, &scene, &pose_at(0), 16, 2).unwrap();
    let b = render_small(&r, &scene, &pose_at(9), 16, 2).unwrap();
    assert_ne!(encode_image(&a, &net).unwrap(), encode_image(&b, &net).unwrap());
}

#[test]
fn kv_concatenation_contracts() {
    let net = CoarseNet::new(tiny(), 5).unwrap();
    let a = encode_image(&Image::filled(16, 16, [0.1, 0.5, 0.9]), &net).unwrap();
    let b = encode_image(&Image::filled(16, 16, [0.7, 0.2, 0.2]), &net).unwrap();
    let (k, v) = build_kv(&a, &b, &net).unwrap();
    assert_eq!(k.shape(), &[8, 16]);
    assert_eq!(v.shape(), &[8, 16]);
    let (k2, _) = build_kv(&b, &a, &net).unwrap();
    for r in 0..4 {
        for c in 0..16 {
            assert_eq!(k.get2(r, c), k2.get2(r + 4, c));
            assert_eq!(k.get2(r + 4, c), k2.get2(r, c));
        }
    }
    let z = Tensor::zeros(&[4, 16]);
    let (kz, vz) = build_kv(&z, &z, &net).unwrap();
    assert!(kz.data().iter().chain(vz.data()).all(|&x| x == 0.0));
}

#[test]
fn pose_query_canonicalizes_sign() {
    let net = CoarseNet::new(tiny(), 5).unwrap();
    let p = pose_at(4);
    let flipped = Pose {
        rotation: p.rotation.neg(),
        translation: p.translation,
    };
    let a = pose_query(&p, &net).unwrap();
    assert_eq!(a, pose_query(&p, &net).unwrap());
    assert_eq!(a, pose_query(&flipped, &net).unwrap());
    assert_eq!(a.shape(), &[1, 16]);
    assert!(pose_query(&Pose::identity(), &net).unwrap().is_finite());
}

#[test]
fn candidate_quaternion_is_unit_and_canonical() {
    let net = CoarseNet::new(tiny(), 9).unwrap();
    let scene = generate_synthetic(7, 200, SceneStyle::Textured).unwrap();
    let r = crate::render::Rasterizer::default();
    for i in [0, 5, 11] {
        let t = render_small(&r, &scene, &pose_at(i), 16, 2).unwrap();
        let s = render_small(&r, &scene, &pose_at(i + 1), 16, 2).unwrap();
        let (p, pooled) = candidate_pose(&t, &s, &pose_at(i + 1), &net).unwrap();
        assert!((p.rotation.norm() - 1.0).abs() < 1e-9);
        assert!(p.rotation.w >= 0.0);
        let w = predict_weight(&pooled, &net).unwrap();
        assert!(w.is_finite());
        assert_eq!(w, predict_weight(&pooled, &net).unwrap());
    }
}

fn cand(axis: [f64; 3], deg: f64, t: [f64; 3]) -> Pose<f64> {
    Pose::new(Quaternion::from_axis_angle_deg(&Vector3::from(axis), deg), Vector3::from(t))
}

#[test]
fn softmax_weights_sum_to_one() {
    for logits in [vec![0.0, 1.0, -3.0, 700.0], vec![-1e3; 16], vec![2.5]] {
        let w = softmax(&logits);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn one_hot_fusion_selects_exactly() {
    let poses = vec![
        cand([1.0, 0.0, 0.0], 10.0, [0.1, 0.2, 4.0]),
        cand([0.0, 1.0, 1.0], 70.0, [-1.0, 0.5, 3.0]),
        cand([0.3, -1.0, 0.0], 130.0, [0.0, 0.0, 5.0]),
    ];
    for k in 0..3 {
        let mut weights = vec![0.0; 3];
        weights[k] = 1.0;
        let f = fuse_poses(&CandidateSet {
            poses: poses.clone(),
            weights,
        })
        .unwrap();
        assert_eq!(f.translation, poses[k].translation);
        assert_eq!(f.rotation, poses[k].rotation.normalized());
    }
}

#[test]
fn identical_and_antipodal_candidates() {
    let p = cand([0.2, 0.9, -0.1], 48.0, [0.3, -0.1, 4.2]);
    let f = fuse_poses(&CandidateSet {
        poses: vec![p, p],
        weights: vec![0.5, 0.5],
    })
    .unwrap();
    assert!(rotation_error_deg(&f.rotation, &p.rotation) < 1e-6);
    assert!((f.translation - p.translation).norm() < 1e-15);
    let flipped = Pose {
        rotation: p.rotation.neg(),
        translation: p.translation,
    };
    let f = fuse_poses(&CandidateSet {
        poses: vec![p, flipped],
        weights: vec![0.5, 0.5],
    })
    .unwrap();
    assert!((f.rotation.norm() - 1.0).abs() < 1e-12);
    assert!(rotation_error_deg(&f.rotation, &p.rotation) < 1e-6);
}

#[test]
fn fused_translation_in_convex_hull() {
    let poses: Vec<Pose<f64>> = (0..5)
        .map(|i| cand([1.0, i as f64, 0.0], 20.0 * i as f64, [i as f64, -(i as f64), 4.0 + 0.1 * i as f64]))
        .collect();
    let weights = softmax(&[0.3, -1.0, 2.0, 0.0, 0.7]);
    let f = fuse_poses(&CandidateSet { poses, weights }).unwrap();
    assert!((0.0..=4.0).contains(&f.translation.x));
    assert!((-4.0..=0.0).contains(&f.translation.y));
    assert!((4.0..=4.4).contains(&f.translation.z));
}

#[test]
fn fusion_rejects_malformed_sets() {
    assert!(fuse_poses(&CandidateSet {
        poses: vec![],
        weights: vec![]
    })
    .is_err());
    assert!(fuse_poses(&CandidateSet {
        poses: vec![Pose::identity()],
        weights: vec![0.5, 0.5]
    })
    .is_err());
}

#[test]
fn warm_cache_renders_nothing_and_order_does_not_matter() {
    let scene = generate_synthetic(7, 200, SceneStyle::Textured).unwrap();
    let est = CoarseEstimator::new(CoarseNet::new(tiny(), 2).unwrap());
    let sampling = tiny_sampling();
    let target = render_small(&crate::render::Rasterizer::default(), &scene, &pose_at(3), 16, 4).unwrap();
    let a = est.run_coarse(&target, &scene, &sampling).unwrap();
    assert_eq!(est.render_count(), 4);
    let b = est.run_coarse(&target, &scene, &sampling).unwrap();
    assert_eq!(est.render_count(), 4);
    assert_eq!(a, b);
    assert!((a.candidates.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let views = est.source_views(&scene, &sampling).unwrap();
    let perm = [2, 0, 3, 1];
    let shuffled = SourceViews {
        poses: perm.iter().map(|&i| views.poses[i]).collect(),
        images: perm.iter().map(|&i| views.images[i].clone()).collect(),
    };
    let c = est.run_with_views(&target, &shuffled).unwrap();
    assert!(rotation_error_deg(&a.pose.rotation, &c.pose.rotation) < 1e-6);
    assert!((a.pose.translation - c.pose.translation).norm() < 1e-12);
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(c.candidates.poses[k], a.candidates.poses[i]);
    }
}

#[test]
fn large_targets_are_box_filtered_to_network_size() {
    let est = CoarseEstimator::new(CoarseNet::new(tiny(), 2).unwrap());
    let scene = generate_synthetic(7, 100, SceneStyle::Textured).unwrap();
    let big = Image::filled(64, 64, [0.5; 3]);
    assert!(est.run_coarse(&big, &scene, &tiny_sampling()).is_ok());
    assert!(matches!(
        est.run_coarse(&Image::filled(40, 40, [0.5; 3]), &scene, &tiny_sampling()),
        Err(CoarseError::ImageSize { .. })
    ));
}

#[test]
fn full_network_micro_batch_gradients() {
    let r = micro_batch_grad_check(11).unwrap();
    assert!(r.max_rel_err < 1e-4, "{r:?}");
    assert!(r.n_checked > 500);
}

fn quick_train(steps_batch: (usize, usize), seed: u64) -> TrainReport {
    let scene = generate_synthetic(7, 300, SceneStyle::Textured).unwrap();
    let cfg = TrainConfig {
        n_epochs: 1,
        n_train: steps_batch.0 * steps_batch.1,
        batch: steps_batch.1,
        lr: 3e-3,
        seed,
        supersample: 2,
        ..TrainConfig::default()
    };
    train_coarse(&scene, &tiny_sampling(), tiny(), &cfg).unwrap().1
}

#[test]
fn training_loss_decreases_over_first_hundred_steps() {
    let r = quick_train((100, 4), 7);
    assert_eq!(r.steps, 100);
    let head: f64 = r.losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = r.losses[90..].iter().sum::<f64>() / 10.0;
    assert!(tail < 0.75 * head, "first {head} last {tail}");
}

#[test]
fn training_is_reproducible() {
    assert_eq!(quick_train((6, 2), 3).losses, quick_train((6, 2), 3).losses);
    assert_ne!(quick_train((6, 2), 3).losses, quick_train((6, 2), 4).losses);
}

#[test]
fn params_survive_save_and_load() {
    let net = CoarseNet::new(tiny(), 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    net.params.save(&path, serde_json::to_value(&net.config).unwrap()).unwrap();
    let (store, meta) = splatpose_nn::ParamStore::load(&path).unwrap();
    let cfg: CoarseNetConfig = serde_json::from_value(meta).unwrap();
    let back = CoarseNet::from_params(cfg, store).unwrap();
    assert_eq!(back.params.tensors(), net.params.tensors());
    assert!(CoarseNet::from_params(CoarseNetConfig::desk(), back.params).is_err());
}
