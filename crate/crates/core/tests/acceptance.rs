//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatpose::bench::{
    aggregate, default_base_poses, default_thresholds, generate_testset, run_benchmark, DeviationBin, Pipeline,
    PipelineSwitches,
};
use splatpose::coarse::{
    fuse_poses, micro_batch_grad_check, softmax, train_coarse, CandidateSet, CoarseEstimator, CoarseNet,
    CoarseNetConfig, TrainConfig,
};
use splatpose::correspond::MatcherConfig;
use splatpose::geom::{
    look_at, perturb_pose, rotation_error_deg, sample_sphere, Pose, Quaternion, SphericalConfig, ViewMode,
};
use splatpose::refine::{
    decompose_essential, eight_point, ransac_essential, refine_pose, relative_magnitude, sampson_error, Matcher,
    RansacConfig, RefineConfig, RefineContext, RefineStatus, ScaleMode,
};
use splatpose::render::{render, CameraIntrinsics, Rasterizer, RenderOptions};
use splatpose::scene::{generate_synthetic, rgb_to_sh_dc, GaussianScene, SceneStyle};
use splatpose_nn::{grad_check, Axis, NnError, Tape, Tensor, Var};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let dt = t0.elapsed();
    let res = match (res, limit) {
        (Ok(_), Some(l)) if dt > l => Err(format!("took {:.1}s, limit {:.0}s", dt.as_secs_f64(), l.as_secs_f64())),
        (r, _) => r,
    };
    match &res {
        Ok(d) => println!("PASS {name}: {d} [{:.1}s]", dt.as_secs_f64()),
        Err(d) => println!("FAIL {name}: {d} [{:.1}s]", dt.as_secs_f64()),
    }
    res.is_ok()
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let q = Quaternion::<f64>::from_axis_angle_deg(&axis, rng.gen_range(-180.0..180.0));
        let back = Quaternion::from_matrix(&q.to_matrix());
        let d = (back.canonical().to_array().iter().zip(q.canonical().to_array()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(d);
        let m = q.to_matrix();
        worst = worst.max((Quaternion::from_matrix(&m).to_matrix() - m).abs().max());
    }
    ensure(worst < 1e-12, format!("round trip {worst:e}"))?;
    let q = Quaternion::<f64>::from_axis_angle_deg(&Vector3::new(0.2, -0.4, 1.0), 47.0);
    ensure(rotation_error_deg(&q, &q).abs() < 1e-9, "identity case")?;
    ensure(rotation_error_deg(&q, &q.neg()).abs() < 1e-9, "sign flip")?;
    let r30 = q.mul(&Quaternion::from_axis_angle_deg(&Vector3::x(), 30.0));
    ensure((rotation_error_deg(&q, &r30) - 30.0).abs() < 1e-9, "30 degree case")?;
    let cfg = SphericalConfig::default();
    let views = sample_sphere::<f64>(&cfg).map_err(|e| e.to_string())?;
    ensure(views.len() == 16, format!("{} views", views.len()))?;
    for p in &views {
        let c = p.center();
        ensure((c.norm() - cfg.radius).abs() < 1e-9, "radius")?;
        ensure(cfg.mode == ViewMode::ObjectLevel, "mode")?;
        let miss = (Vector3::from(cfg.target) - c).cross(&p.forward()).norm();
        ensure(miss < 1e-9, format!("axis misses target by {miss:e}"))?;
    }
    Ok(format!("round trip {worst:.1e}, 16 views on R = {}", cfg.radius))
}

fn renderer() -> Outcome {
    let k = CameraIntrinsics::square(256);
    let cam = look_at(&Vector3::new(0.0, 0.0, 4.0), &Vector3::zeros(), &Vector3::y()).map_err(|e| e.to_string())?;
    let img = render(&GaussianScene::default(), &cam, &k, [0.2, 0.3, 0.4]).map_err(|e| e.to_string())?;
    ensure(img.rgb.iter().all(|p| *p == [0.2, 0.3, 0.4]), "empty scene")?;

    let mut one = GaussianScene::default();
    one.push([0.0; 3], [0.1f64.ln(); 3], Quaternion::identity(), 0.999, rgb_to_sh_dc([1.0, 0.0, 0.0]));
    let img = render(&one, &cam, &k, [0.0; 3]).map_err(|e| e.to_string())?;
    let (cx, cy) = (k.cx as usize, k.cy as usize);
    let c = img.pixel(cx, cy);
    ensure((c[0] - 1.0).abs() < 0.05 && c[1] < 0.05 && c[2] < 0.05, "single splat color")?;
    let max = img.rgb.iter().map(|p| p[0]).fold(0.0, f64::max);
    ensure(max == c[0], "single splat peak off the principal point")?;

    let mut two = GaussianScene::default();
    two.push([0.0, 0.0, 2.0], [0.1f64.ln(); 3], Quaternion::identity(), 0.9999, rgb_to_sh_dc([0.0, 1.0, 0.0]));
    two.push([0.0; 3], [0.2f64.ln(); 3], Quaternion::identity(), 0.9, rgb_to_sh_dc([1.0, 0.0, 0.0]));
    let c = render(&two, &cam, &k, [0.0; 3]).map_err(|e| e.to_string())?.pixel(cx, cy);
    ensure((c[1] - 1.0).abs() < 1e-3 && c[0] < 1e-3, "two-splat compositing")?;

    let g = generate_synthetic(9, 500, SceneStyle::Textured).map_err(|e| e.to_string())?;
    let pose = sample_sphere::<f64>(&SphericalConfig::default()).map_err(|e| e.to_string())?[2];
    let a = render(&g, &pose, &k, [0.1; 3]).map_err(|e| e.to_string())?;
    let rot = Quaternion::from_axis_angle_deg(&Vector3::new(0.3, -1.0, 0.4), 77.0);
    let t = Vector3::new(0.5, -0.2, 1.0);
    let moved = g.transformed(&rot, &t);
    let b = render(&moved, &pose.compose(&Pose::new(rot, t).inverse()), &k, [0.1; 3]).map_err(|e| e.to_string())?;
    let dev = a
        .rgb
        .iter()
        .zip(&b.rgb)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .fold(0.0, f64::max);
    ensure(dev < 1e-6, format!("rigid motion changed the image by {dev:e}"))?;

    let serial = Rasterizer::new(RenderOptions {
        parallel: false,
        ..Default::default()
    })
    .render(&g, &pose, &k, [0.0; 3])
    .map_err(|e| e.to_string())?;
    let parallel = Rasterizer::new(RenderOptions::default())
        .render(&g, &pose, &k, [0.0; 3])
        .map_err(|e| e.to_string())?;
    ensure(serial == parallel, "tile-parallel render differs from serial")?;
    Ok(format!("rigid motion {dev:.1e}, parallel == serial at 256x256"))
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn layer_err<F>(params: Vec<Tensor>, f: F) -> Result<f64, String>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let r = grad_check(
        |t, p| {
            let out = f(t, p)?;
            let shape = t.value(out).shape().to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let w = t.constant(rand_tensor(&mut rng, &shape));
            let m = t.mul(out, w)?;
            Ok(t.sum(m))
        },
        &params,
        1e-5,
    )
    .map_err(|e| e.to_string())?;
    Ok(r.max_rel_err)
}

fn autodiff() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = rand_tensor(&mut rng, &[3, 6]);
    for v in x.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    }
    let lin = vec![
        rand_tensor(&mut rng, &[4, 5]),
        rand_tensor(&mut rng, &[5, 3]),
        rand_tensor(&mut rng, &[1, 3]),
    ];
    let att = vec![
        rand_tensor(&mut rng, &[1, 6]),
        rand_tensor(&mut rng, &[5, 6]),
        rand_tensor(&mut rng, &[5, 4]),
    ];
    let m = rand_tensor(&mut rng, &[4, 7]);
    let layers: Vec<(&str, f64)> = vec![
        ("linear", layer_err(lin, |t, p| t.linear(p[0], p[1], p[2]))?),
        ("relu", layer_err(vec![x], |t, p| Ok(t.relu(p[0])))?),
        ("softmax", layer_err(vec![m.clone()], |t, p| t.softmax(p[0], Axis::Cols))?),
        ("attention", layer_err(att, |t, p| t.attention(p[0], p[1], p[2]))?),
        ("layer_norm", layer_err(vec![m.clone()], |t, p| t.layer_norm(p[0]))?),
        ("mean_pool", layer_err(vec![m], |t, p| t.mean(p[0], Axis::Rows))?),
    ];
    for (name, e) in &layers {
        ensure(*e < 1e-6, format!("{name} rel err {e:e}"))?;
    }
    let worst_layer = layers.iter().map(|l| l.1).fold(0.0, f64::max);
    let full = micro_batch_grad_check(5).map_err(|e| e.to_string())?;
    ensure(full.max_rel_err < 1e-4, format!("network rel err {:e}", full.max_rel_err))?;
    Ok(format!(
        "layers {worst_layer:.1e}, network {:.1e} over {} coords",
        full.max_rel_err, full.n_checked
    ))
}

fn fusion() -> Outcome {
    let w = softmax(&[0.3, -2.0, 5.0, 1.1, 40.0, -40.0]);
    let s: f64 = w.iter().sum();
    ensure((s - 1.0).abs() < 1e-12, format!("softmax sum {s}"))?;
    let poses: Vec<Pose<f64>> = (0..4)
        .map(|i| {
            Pose::new(
                Quaternion::from_axis_angle_deg(&Vector3::new(1.0, i as f64, 0.5), 20.0 * i as f64),
                Vector3::new(i as f64, -1.0, 0.5 * i as f64),
            )
        })
        .collect();
    let one_hot = fuse_poses(&CandidateSet {
        poses: poses.clone(),
        weights: vec![0.0, 0.0, 1.0, 0.0],
    })
    .map_err(|e| e.to_string())?;
    ensure(one_hot.translation == poses[2].translation, "one-hot translation")?;
    ensure(rotation_error_deg(&one_hot.rotation, &poses[2].rotation) < 1e-9, "one-hot rotation")?;
    let q = poses[3].rotation;
    let anti = fuse_poses(&CandidateSet {
        poses: vec![Pose::new(q, Vector3::zeros()), Pose::new(q.neg(), Vector3::zeros())],
        weights: vec![0.5, 0.5],
    })
    .map_err(|e| e.to_string())?;
    ensure(rotation_error_deg(&anti.rotation, &q) < 1e-9, "antipodal fusion")?;
    Ok("sum, one-hot selection and antipodal fusion".into())
}

fn synth_pairs(rng: &mut ChaCha8Rng, r: &Matrix3<f64>, t: &Vector3<f64>, n: usize) -> Vec<(Vector2<f64>, Vector2<f64>)> {
    let mut out = Vec::new();
    while out.len() < n {
        let x = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(3.0..6.0));
        let y = r * x + t;
        if y.z > 0.1 {
            out.push((Vector2::new(x.x / x.z, x.y / x.z), Vector2::new(y.x / y.z, y.y / y.z)));
        }
    }
    out
}

fn epipolar() -> Outcome {
    let (mut worst_r, mut worst_t, mut worst_s) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let r = Quaternion::from_axis_angle_deg(&axis, rng.gen_range(-20.0..20.0)).to_matrix();
        let t = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        let pairs = synth_pairs(&mut rng, &r, &t, 40);
        let e_true = t.cross_matrix() * r;
        for (p, q) in &pairs {
            worst_s = worst_s.max(sampson_error(&e_true, p, q));
        }
        let e = eight_point(&pairs).map_err(|e| e.to_string())?;
        let (rr, tt) = decompose_essential(&e, &pairs).map_err(|e| e.to_string())?;
        worst_r = worst_r.max(rotation_error_deg(&Quaternion::from_matrix(&rr), &Quaternion::from_matrix(&r)));
        worst_t = worst_t.max(tt.normalize().dot(&t.normalize()).clamp(-1.0, 1.0).acos().to_degrees());
    }
    ensure(worst_s < 1e-10, format!("oracle Sampson {worst_s:e}"))?;
    ensure(worst_r < 0.1, format!("rotation {worst_r} deg"))?;
    ensure(worst_t < 0.5, format!("translation direction {worst_t} deg"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let r = Quaternion::from_axis_angle_deg(&Vector3::new(0.2, 1.0, -0.3), 12.0).to_matrix();
    let t = Vector3::new(0.8, 0.1, -0.2);
    let mut pairs = synth_pairs(&mut rng, &r, &t, 200);
    let mut truth = vec![true; pairs.len()];
    for i in 0..pairs.len() {
        if rng.gen_bool(0.3) {
            pairs[i].1 = Vector2::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
            truth[i] = false;
        }
    }
    let cfg = RansacConfig::default();
    let a = ransac_essential(&pairs, 1e-6, &cfg).map_err(|e| e.to_string())?;
    let b = ransac_essential(&pairs, 1e-6, &cfg).map_err(|e| e.to_string())?;
    ensure(a == b, "RANSAC not deterministic")?;
    let missed = truth.iter().zip(&a.inliers).filter(|(t, i)| **t && !**i).count();
    ensure(missed == 0, format!("{missed} true inliers rejected"))?;
    let inl: Vec<_> = pairs.iter().zip(&a.inliers).filter(|x| *x.1).map(|x| *x.0).collect();
    let (rr, _) = decompose_essential(&a.e, &inl).map_err(|e| e.to_string())?;
    let ang = rotation_error_deg(&Quaternion::from_matrix(&rr), &Quaternion::from_matrix(&r));
    ensure(ang < 1.0, format!("RANSAC rotation {ang} deg"))?;
    Ok(format!(
        "eight-point {worst_r:.1e} deg / {worst_t:.1e} deg, RANSAC {ang:.1e} deg at 30% outliers"
    ))
}

fn stage_two_oracle() -> Outcome {
    let scene = generate_synthetic(5, 1500, SceneStyle::Textured).map_err(|e| e.to_string())?;
    let gt = look_at(&Vector3::new(0.5, 0.8, 3.2), &Vector3::zeros(), &Vector3::y()).map_err(|e| e.to_string())?;
    let coarse = perturb_pose(
        &gt,
        &Quaternion::from_axis_angle_deg(&Vector3::new(0.3, 1.0, -0.2), 8.0),
        &Vector3::new(0.1, -0.05, 0.08),
    );
    let k = CameraIntrinsics::square(128);
    let rast = Rasterizer::new(RenderOptions::default());
    let target = rast.render(&scene, &gt, &k, [0.0; 3]).map_err(|e| e.to_string())?;
    rast.reset_count();
    let ctx = RefineContext {
        scene: &scene,
        rasterizer: &rast,
        scene_center: Vector3::zeros(),
        regressor: None,
    };
    let m = Matcher::Oracle {
        target_pose: gt,
        n: 300,
        noise_px: 0.0,
        seed: 3,
    };
    let cfg = RefineConfig {
        scale_mode: ScaleMode::Known(relative_magnitude(&coarse, &gt)),
        ..RefineConfig::default()
    };
    let out = refine_pose(&coarse, &target, &k, &ctx, &m, &cfg).map_err(|e| e.to_string())?;
    ensure(out.diagnostics.status == RefineStatus::Refined, format!("{:?}", out.diagnostics.status))?;
    ensure(rast.render_count() == 1, format!("{} renders", rast.render_count()))?;
    let rot = rotation_error_deg(&out.pose.rotation, &gt.rotation);
    let tr = (out.pose.translation - gt.translation).norm() / gt.translation.norm();
    ensure(rot < 0.1, format!("rotation {rot} deg"))?;
    ensure(tr < 0.01, format!("translation {tr}"))?;
    Ok(format!("rotation {rot:.1e} deg, translation {:.1e}%, 1 render", tr * 100.0))
}

fn pipeline(scene: &GaussianScene, est: &CoarseEstimator) -> Outcome {
    let set = generate_testset(
        scene,
        &default_base_poses().map_err(|e| e.to_string())?,
        &DeviationBin::new(20.0, 40.0, 100, 2024),
        &CameraIntrinsics::square(256),
    )
    .map_err(|e| e.to_string())?;
    let p = Pipeline {
        scene,
        estimator: est,
        sampling: SphericalConfig::default(),
        refine: RefineConfig::default(),
        matcher: MatcherConfig::default(),
        regressor: None,
        oracle: None,
    };
    let th = default_thresholds();
    let off = PipelineSwitches {
        use_matcher_solver: false,
        ..Default::default()
    };
    let on = run_benchmark(&p, &set, &PipelineSwitches::default(), &th).map_err(|e| e.to_string())?;
    let off = run_benchmark(&p, &set, &off, &th).map_err(|e| e.to_string())?;
    let (a, b) = (&on.aggregates, &off.aggregates);
    let (s_on, s_off) = (a.success[0].rate, b.success[0].rate);
    let detail = format!(
        "coarse median {:.2} deg, not worse {:.0}%, success@5deg/0.05 {:.2} on vs {:.2} off",
        a.coarse_median_rot_err,
        a.not_worse_frac * 100.0,
        s_on,
        s_off
    );
    ensure(a.coarse_median_rot_err < 15.0, detail.clone())?;
    ensure(a.not_worse_frac >= 0.7, detail.clone())?;
    ensure(s_on > s_off, detail.clone())?;
    Ok(detail)
}

fn protocol(scene: &GaussianScene, est: &CoarseEstimator) -> Outcome {
    let base = default_base_poses().map_err(|e| e.to_string())?;
    let k = CameraIntrinsics::square(64);
    for (lo, hi) in [(20.0, 40.0), (40.0, 80.0), (80.0, 180.0)] {
        let set = generate_testset(scene, &base, &DeviationBin::new(lo, hi, 50, 3), &k).map_err(|e| e.to_string())?;
        for s in &set {
            let ang = rotation_error_deg(&s.pose.rotation, &base[s.base_index].rotation);
            ensure(ang >= lo - 1e-9 && ang <= hi + 1e-9, format!("angle {ang} outside [{lo}, {hi}]"))?;
            ensure(s.offset.iter().all(|o| o.abs() <= 0.2), "offset outside 0.2")?;
        }
    }
    let set = generate_testset(scene, &base, &DeviationBin::new(20.0, 40.0, 12, 5), &CameraIntrinsics::square(128))
        .map_err(|e| e.to_string())?;
    let p = Pipeline {
        scene,
        estimator: est,
        sampling: SphericalConfig::default(),
        refine: RefineConfig::default(),
        matcher: MatcherConfig::default(),
        regressor: None,
        oracle: None,
    };
    let th = default_thresholds();
    let a = run_benchmark(&p, &set, &PipelineSwitches::default(), &th).map_err(|e| e.to_string())?;
    let b = run_benchmark(&p, &set, &PipelineSwitches::default(), &th).map_err(|e| e.to_string())?;
    let recomputed = aggregate(&a.records, &th);
    ensure(
        recomputed == a.aggregates,
        "aggregates differ from records",
    )?;
    let (ja, jb) = (
        serde_json::to_string(&a.without_timings()).map_err(|e| e.to_string())?,
        serde_json::to_string(&b.without_timings()).map_err(|e| e.to_string())?,
    );
    ensure(ja == jb, "benchmark not reproducible")?;
    Ok("bins exact, aggregates recomputable, reruns bit-identical".into())
}

fn main() {
    let mut ok = true;
    ok &= run("1 geometry", Some(Duration::from_secs(1)), geometry);
    ok &= run("2 renderer", Some(Duration::from_secs(30)), renderer);
    ok &= run("3 autodiff", Some(Duration::from_secs(120)), autodiff);
    ok &= run("4 fusion", None, fusion);
    ok &= run("5 epipolar", Some(Duration::from_secs(60)), epipolar);
    ok &= run("6 stage-2 oracle", None, stage_two_oracle);

    // one seeded reference training shared by criteria 7 and 8
    let t0 = Instant::now();
    let scene = generate_synthetic(7, 500, SceneStyle::Textured).expect("scene");
    let trained = catch_unwind(|| {
        train_coarse(&scene, &SphericalConfig::default(), CoarseNetConfig::desk(), &TrainConfig::default())
            .map(|(net, _)| net)
    });
    let net = match trained {
        Ok(Ok(net)) => Some(net),
        _ => None,
    };
    let est = net.map(CoarseEstimator::new);
    let train_time = t0.elapsed();
    ok &= run("7 desk pipeline", Some(Duration::from_secs(900).saturating_sub(train_time)), || {
        let est = est.as_ref().ok_or("reference training failed")?;
        pipeline(&scene, est).map(|d| format!("{d}, training {:.0}s", train_time.as_secs_f64()))
    });
    ok &= run("8 protocol", None, || {
        match est.as_ref() {
            Some(est) => protocol(&scene, est),
            None => protocol(&scene, &CoarseEstimator::new(CoarseNet::new(CoarseNetConfig::desk(), 1).map_err(|e| e.to_string())?)),
        }
    });
    if !ok {
        std::process::exit(1);
    }
}
