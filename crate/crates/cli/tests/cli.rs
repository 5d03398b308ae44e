//! The `morphomap` binary: exit codes and end-to-end runs on the synthetic city.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_morphomap"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn morphomap")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

/// Synthetic city with a trained model and map, shared by the tests below.
fn city() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let d = dir.to_str().unwrap();
        let cfg = format!("{d}/config.json");
        assert_eq!(code(&run(&["synth", "--out", d])), 0);
        for sub in ["train", "map"] {
            let o = run(&["-c", &cfg, sub]);
            assert_eq!(code(&o), 0, "{sub}: {}", String::from_utf8_lossy(&o.stderr));
        }
        dir
    })
}

fn config() -> String {
    city().join("config.json").to_str().unwrap().to_owned()
}

#[test]
fn missing_input_file_is_an_ingest_failure() {
    let o = run(&["ingest", "--buildings", "/no/such/b.geojson", "--roads", "/no/such/r.geojson"]);
    assert_eq!(code(&o), 2);
    assert!(o.stdout.is_empty());
}

#[test]
fn unconfigured_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_ne!(code(&run(&["ingest", "--out-dir", out])), 0);
}

#[test]
fn ingest_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["-c", &config(), "--out-dir", out, "ingest"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!(v["summary"]["buildings_kept"].as_u64().unwrap() > 1000);
    assert!(dir.path().join("dataset.json").exists());
}

#[test]
fn single_class_labels_fail_training() {
    let src = city();
    let labels: Value = serde_json::from_slice(&std::fs::read(src.join("labels.geojson")).unwrap()).unwrap();
    let mut one = labels.clone();
    let feats = one["features"].as_array_mut().unwrap();
    feats.truncate(1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.geojson");
    std::fs::write(&path, serde_json::to_vec(&one).unwrap()).unwrap();
    let o = run(&[
        "-c",
        &config(),
        "--labels",
        path.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "train",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("model.json").exists());
}

#[test]
fn missing_model_fails_mapping() {
    let o = run(&["-c", &config(), "--model", "/no/such/model.json", "map"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn boundary_needs_two_distinct_known_features() {
    let cfg = config();
    assert_eq!(code(&run(&["-c", &cfg, "boundary", "--fx", "avg_area", "--fy", "avg_area"])), 5);
    assert_eq!(code(&run(&["-c", &cfg, "boundary", "--fx", "roof_pitch", "--fy", "avg_area"])), 5);
}

#[test]
fn boundary_outputs_cover_several_classes() {
    let dir = tempfile::tempdir().unwrap();
    let model = city().join("out/model.json");
    let o = run(&[
        "-c",
        &config(),
        "--model",
        model.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "boundary",
        "--resolution",
        "50",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let counts: Vec<u64> = stdout_json(&o)["counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(counts.iter().sum::<u64>(), 2500);
    assert!(counts.iter().filter(|&&n| n > 0).count() >= 2, "{counts:?}");
    let csv = std::fs::read_to_string(dir.path().join("boundary_avg_height_building_count.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2501);
    assert!(dir.path().join("boundary_avg_height_building_count.svg").exists());
}

fn pathloss(args: &[&str]) -> Output {
    let cfg = config();
    let mut all = vec!["-c", cfg.as_str(), "pathloss", "--planar", "--freq", "28"];
    all.extend_from_slice(args);
    run(&all)
}

#[test]
fn pathloss_inside_one_district() {
    let o = pathloss(&["--tx=400,400", "--rx=900,700", "--situation", "LoS"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["env_tx"], "RES");
    assert_eq!(v["env_rx"], "RES");
    assert_eq!(v["env_used"], "RES");
    assert!(v["loss_db"].as_f64().unwrap().is_finite());
}

#[test]
fn pathloss_endpoint_in_lake_gap() {
    // The districts are separated by 800 m of open ground.
    let o = pathloss(&["--tx=1960,700", "--rx=1500,700"]);
    assert_eq!(code(&o), 6);
    let o = pathloss(&["--tx=-5000,-5000", "--rx=400,400"]);
    assert_eq!(code(&o), 6);
}

#[test]
fn pathloss_takes_lon_lat_by_default() {
    let o = run(&[
        "-c",
        &config(),
        "pathloss",
        "--tx=-73.561,45.506",
        "--rx=-73.558,45.507",
        "--freq",
        "3.5",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["env_used"], "RES");
}

#[test]
fn eval_prints_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pred.csv");
    std::fs::write(&p, "actual,predicted\nRES,RES\nULR,ULR\nUHR,ULR\nUHR,UHR\n").unwrap();
    let report = dir.path().join("r.json");
    let o = run(&["eval", "--predictions", p.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("accuracy 0.7500 (3/4)"));
    let v: Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    assert_eq!(v["accuracy"], 0.75);
    assert_eq!(v["recall"]["UHR"], 0.5);
}

#[test]
fn eval_rejects_unknown_class() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pred.csv");
    std::fs::write(&p, "actual,predicted\nRES,XYZ\n").unwrap();
    assert_eq!(code(&run(&["eval", "--predictions", p.to_str().unwrap()])), 1);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "-c",
        &config(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--trees",
        "3",
        "--seed",
        "11",
        "train",
    ]);
    assert_eq!(code(&o), 0);
    let model: Value = serde_json::from_slice(&std::fs::read(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["trees"].as_array().unwrap().len(), 3);
    assert_eq!(model["config"]["seed"], 11);
}

#[test]
fn model_does_not_depend_on_thread_count() {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, threads) in dirs.iter().zip(["1", "3"]) {
        let o = run(&["-c", &config(), "--threads", threads, "--out-dir", d.path().to_str().unwrap(), "train"]);
        assert_eq!(code(&o), 0);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("model.json")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
}
