use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn campus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/campus.json")
}

fn airstar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airstar"))
        .args(args)
        .env_remove("AIRSTAR_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_guide(record: &Path) -> Output {
    airstar(&[
        "run",
        "--scenario",
        campus().to_str().unwrap(),
        "--mission",
        "Hi AirStar, guide me to the badminton court.",
        "--seed",
        "42",
        "--headless",
        "--record",
        record.to_str().unwrap(),
    ])
}

#[test]
fn headless_records_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ndjson"), dir.path().join("b.ndjson"));
    assert!(run_guide(&a).status.success());
    assert!(run_guide(&b).status.success());
    let (ra, rb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!ra.is_empty());
    assert_eq!(ra, rb);
}

#[test]
fn replay_summary_reports_final_state() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("r.ndjson");
    assert!(run_guide(&rec).status.success());
    let out = airstar(&["replay", "--record", rec.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["final_mission_state"]["state"], "standby_hover");
    assert!(v["telemetry"].as_u64().unwrap() > 100);
}

#[test]
fn unknown_landmark_exits_nonzero() {
    let out = airstar(&[
        "run",
        "--scenario",
        campus().to_str().unwrap(),
        "--mission",
        "Guide me to the swimming pool.",
        "--headless",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_scenario_path_is_an_error() {
    let out = airstar(&["run", "--scenario", "/nonexistent.json", "--mission", "x", "--headless"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent"));
}

#[test]
fn config_from_environment_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_airstar"))
        .args(["eval", "--suite", "empty"])
        .env("AIRSTAR_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_suites() {
    let empty = airstar(&["eval", "--suite", "empty"]);
    assert!(empty.status.success());
    let v: serde_json::Value = serde_json::from_slice(&empty.stdout).unwrap();
    assert!(v["success_rate"].is_null());
    assert_eq!(v["missions"].as_array().unwrap().len(), 0);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("campus.json");
    let campus = airstar(&["eval", "--suite", "campus", "--out", out.to_str().unwrap()]);
    assert!(campus.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["success_rate"], 1.0);
    for m in v["missions"].as_array().unwrap() {
        if let (Some(c), Some(min)) = (m["min_clearance"].as_f64(), m["c_min"].as_f64()) {
            assert!(c >= min - 1e-9, "{m}");
        }
    }
    assert!(String::from_utf8_lossy(&campus.stdout).contains("success rate"));

    assert!(!airstar(&["eval", "--suite", "nope"]).status.success());
}
