use std::path::Path;
use std::process::{Command, Output};

fn splatpose(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatpose"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_scene_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = splatpose(&["train", "--out", "p.bin"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--scene"), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("usage"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"refine": {"sigma": 3}}"#).unwrap();
    let o = splatpose(&["--config", "c.json", "config"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma"), "{}", stderr(&o));
    std::fs::write(dir.path().join("v.json"), r#"{"version": 9}"#).unwrap();
    assert_eq!(splatpose(&["--config", "v.json", "config"], dir.path()).status.code(), Some(2));
}

#[test]
fn partial_config_and_flags_layer_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"seed": 3, "refine": {"min_inliers": 20}}"#).unwrap();
    let o = splatpose(&["--config", "c.json", "--seed", "5", "config"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["train"]["seed"], 5);
    assert_eq!(v["refine"]["min_inliers"], 20);
    assert_eq!(v["refine"]["max_update_deg"], 45.0);
    assert_eq!(v["version"], 1);
}

#[test]
fn missing_params_file_is_a_domain_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    assert!(splatpose(&["gen-scene", "--n", "50", "--out", "s.ply"], dir.path()).status.success());
    std::fs::write(dir.path().join("i.png"), []).unwrap();
    let o = splatpose(
        &["estimate", "--scene", "s.ply", "--params", "nope.bin", "--image", "i.png"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.bin"), "{}", stderr(&o));
}

#[test]
fn scene_views_and_render_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = splatpose(&["--seed", "4", "gen-scene", "--n", "300", "--out", "s.ply"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let before = std::fs::read(d.join("s.ply")).unwrap();
    let o = splatpose(&["sample-views", "--out", "views.json"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let views: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(d.join("views.json")).unwrap()).unwrap();
    assert_eq!(views.len(), 16);
    assert_eq!(views[0]["convention"], "c2w");
    std::fs::write(d.join("pose.json"), views[3].to_string()).unwrap();
    let o = splatpose(
        &["render", "--scene", "s.ply", "--pose", "pose.json", "--size", "48", "--out", "r.png"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::metadata(d.join("r.png")).unwrap().len() > 0);
    // inputs are never rewritten
    assert_eq!(std::fs::read(d.join("s.ply")).unwrap(), before);
}

#[test]
fn grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = splatpose(&["grad-check"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("max_rel_err"));
}

#[test]
fn train_estimate_and_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("c.json"),
        r#"{"image_size": 128, "train": {"supersample": 1}}"#,
    )
    .unwrap();
    let run = |args: &[&str]| {
        let mut all = vec!["--config", "c.json", "--threads", "1"];
        all.extend_from_slice(args);
        let o = splatpose(&all, d);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    run(&["gen-scene", "--n", "300", "--out", "s.ply"]);
    run(&["train", "--scene", "s.ply", "--n-train", "16", "--epochs", "1", "--batch", "8", "--out", "p.bin"]);
    run(&["sample-views", "--out", "views.json"]);
    let views: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(d.join("views.json")).unwrap()).unwrap();
    std::fs::write(d.join("pose.json"), views[5].to_string()).unwrap();
    run(&["render", "--scene", "s.ply", "--pose", "pose.json", "--out", "t.png"]);

    let model = ["--scene", "s.ply", "--params", "p.bin", "--image", "t.png"];
    let mut a = vec!["estimate", "--stage", "coarse"];
    a.extend_from_slice(&model);
    let coarse: serde_json::Value = serde_json::from_str(&stdout(&run(&a))).unwrap();
    let mut a = vec!["estimate", "--stage", "full"];
    a.extend_from_slice(&model);
    let full: serde_json::Value = serde_json::from_str(&stdout(&run(&a))).unwrap();
    assert_eq!(full["T_coarse"], coarse);
    for key in ["T_fine", "n_matches", "n_inliers", "scale_mode"] {
        assert!(full.get(key).is_some(), "{key} missing in {full}");
    }

    run(&[
        "benchmark", "--scene", "s.ply", "--params", "p.bin", "--n", "3", "--format", "csv", "--out", "r.csv",
    ]);
    let csv = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    run(&[
        "benchmark", "--scene", "s.ply", "--params", "p.bin", "--n", "3", "--no-matcher", "--out", "r.json",
    ]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 3);
    assert_eq!(report["config"]["switches"]["use_matcher_solver"], false);
}
