use super::*;
use crate::coarse::{CoarseNet, CoarseNetConfig};
use crate::scene::{generate_synthetic, SceneStyle};

fn scene() -> GaussianScene {
    generate_synthetic(7, 300, SceneStyle::Textured).unwrap()
}

#[test]
fn testset_honors_bin() {
    let base = default_base_poses().unwrap();
    let bin = DeviationBin::new(20.0, 40.0, 40, 3);
    let set = generate_testset(&scene(), &base, &bin, &CameraIntrinsics::square(32)).unwrap();
    assert_eq!(set.len(), 40);
    for s in &set {
        let a = rotation_error_deg(&s.pose.rotation, &base[s.base_index].rotation);
        assert!((20.0 - 1e-9..=40.0 + 1e-9).contains(&a), "{a}");
        assert!((a - s.angle_deg).abs() < 1e-6);
        assert!(s.offset.iter().all(|o| (-0.2..=0.2).contains(o)));
    }
    let again = generate_testset(&scene(), &base, &bin, &CameraIntrinsics::square(32)).unwrap();
    for (a, b) in set.iter().zip(&again) {
        assert_eq!(a.pose, b.pose);
        assert_eq!(a.image, b.image);
    }
}

#[test]
fn zero_bin_reproduces_base_views() {
    let base = default_base_poses().unwrap();
    let bin = DeviationBin {
        rot_range: [0.0, 0.0],
        trans_offset_range: [0.0, 0.0],
        n_samples: 5,
        seed: 1,
    };
    let k = CameraIntrinsics::square(32);
    let sc = scene();
    for s in generate_testset(&sc, &base, &bin, &k).unwrap() {
        let direct = Rasterizer::default().render(&sc, &base[s.base_index], &k, [0.0; 3]).unwrap();
        let diff = s.image.rgb.iter().zip(&direct.rgb).flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()));
        assert!(diff.fold(0.0, f64::max) < 1e-9);
    }
}

#[test]
fn bin_parsing_and_validation() {
    let b: DeviationBin = "20:40".parse().unwrap();
    assert_eq!(b.rot_range, [20.0, 40.0]);
    assert!("40:20".parse::<DeviationBin>().is_err());
    assert!("10:200".parse::<DeviationBin>().is_err());
    assert!("x".parse::<DeviationBin>().is_err());
}

fn record(i: usize, gt: Pose<f64>, fine: Pose<f64>, coarse: Pose<f64>) -> SampleRecord {
    SampleRecord {
        index: i,
        gt,
        coarse,
        fine,
        coarse_rot_err: rotation_error_deg(&coarse.rotation, &gt.rotation),
        coarse_trans_err: position_error(&coarse, &gt),
        rot_err: rotation_error_deg(&fine.rotation, &gt.rotation),
        trans_err: position_error(&fine, &gt),
        coarse_ms: 1.0,
        refine_ms: 2.0,
        diagnostics: None,
        error: None,
    }
}

#[test]
fn oracle_and_fixed_wrong_pipelines() {
    let base = default_base_poses().unwrap();
    let perfect: Vec<_> = base.iter().enumerate().map(|(i, p)| record(i, *p, *p, *p)).collect();
    let a = aggregate(&perfect, &default_thresholds());
    assert!(a.success.iter().all(|s| s.rate == 1.0));
    let wrong: Vec<_> = base.iter().enumerate().map(|(i, p)| record(i, *p, base[0], base[0])).collect();
    let w = aggregate(&wrong, &default_thresholds());
    // base[0] itself is among the samples
    assert!(w.success.iter().all(|s| s.rate <= 1.0 / 16.0));
}

#[test]
fn success_rate_is_monotone_in_thresholds() {
    let base = default_base_poses().unwrap();
    let recs: Vec<_> = (0..16).map(|i| record(i, base[i], base[(i + 1) % 16], base[i])).collect();
    let mut last = 0.0;
    for t in [1.0, 10.0, 45.0, 90.0, 100.0, 180.0] {
        let r = aggregate(&recs, &[Threshold { rot_deg: t, trans: 10.0 }]).success[0].rate;
        assert!(r >= last);
        last = r;
    }
}

fn small_pipeline_report(switches: PipelineSwitches) -> BenchmarkReport {
    let sc = scene();
    let net = CoarseNet::new(CoarseNetConfig::desk(), 3).unwrap();
    let est = CoarseEstimator::new(net);
    let set = generate_testset(&sc, &default_base_poses().unwrap(), &DeviationBin::new(20.0, 40.0, 4, 9), &CameraIntrinsics::square(128))
        .unwrap();
    let p = Pipeline {
        scene: &sc,
        estimator: &est,
        sampling: SphericalConfig::default(),
        refine: RefineConfig::default(),
        matcher: MatcherConfig::default(),
        regressor: None,
        oracle: None,
    };
    run_benchmark(&p, &set, &switches, &default_thresholds()).unwrap()
}

#[test]
fn report_is_self_consistent_and_reproducible() {
    let r = small_pipeline_report(PipelineSwitches::default());
    assert_eq!(r.records.len(), 4);
    assert_eq!(r.aggregates, aggregate(&r.records, &r.config.thresholds));
    let again = small_pipeline_report(PipelineSwitches::default());
    assert_eq!(
        serde_json::to_string(&r.without_timings()).unwrap(),
        serde_json::to_string(&again.without_timings()).unwrap()
    );
    let off = small_pipeline_report(PipelineSwitches {
        use_matcher_solver: false,
        use_wpm: false,
        ..PipelineSwitches::default()
    });
    for rec in &off.records {
        assert_eq!(rec.fine, rec.coarse);
        assert!(rec.diagnostics.is_none());
    }
    assert!(!off.config.switches.use_wpm);
}

#[test]
fn report_files_round_trip() {
    let r = small_pipeline_report(PipelineSwitches::default());
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    r.emit(&json, ReportFormat::Json).unwrap();
    let back: BenchmarkReport = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, r);
    let text = std::fs::read_to_string(&json).unwrap();
    for key in ["use_wpm", "scale_mode", "use_matcher_solver", "n_views"] {
        assert!(text.contains(key));
    }
    let csv = dir.path().join("r.csv");
    r.emit(&csv, ReportFormat::Csv).unwrap();
    let lines = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(lines, r.records.len() + 1);
}

#[test]
fn view_sweep_uses_requested_counts() {
    let sc = scene();
    let est = CoarseEstimator::new(CoarseNet::new(CoarseNetConfig::desk(), 3).unwrap());
    let set = generate_testset(&sc, &default_base_poses().unwrap(), &DeviationBin::new(20.0, 40.0, 2, 1), &CameraIntrinsics::square(32))
        .unwrap();
    let p = Pipeline {
        scene: &sc,
        estimator: &est,
        sampling: SphericalConfig::default(),
        refine: RefineConfig::default(),
        matcher: MatcherConfig::default(),
        regressor: None,
        oracle: None,
    };
    let sw = PipelineSwitches {
        use_matcher_solver: false,
        ..PipelineSwitches::default()
    };
    let series = sweep_views(&p, &set, &sw, &default_thresholds(), &[8, 12, 16, 20]).unwrap();
    for (n, rep) in &series {
        assert_eq!(rep.config.sampling.n_views(), *n);
        assert_eq!(rep.config.switches.n_views, *n);
    }
}
