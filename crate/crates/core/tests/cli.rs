//! End-to-end runs of the `ibflow` binary: exit codes, artifact layout,
//! and byte-level determinism of the sample streams.

use std::fs;
use std::path::Path;
use std::process::Command;

fn ibflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ibflow"))
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_suite_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "{}");
    let out = ibflow().args(["frobnicate", "--config", &config]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let out = ibflow()
        .args(["analyze", "--config", "/nonexistent/nope.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_2_with_named_violation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"replicas": 0}"#);
    let out = ibflow().args(["analyze", "--config", &config]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("replicas"), "{stderr}");
}

#[test]
fn analyze_suite_passes_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), "{}");
    let out = ibflow()
        .args(["analyze", "--config", &config, "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["run_record.json", "analyze_report.json", "analyze_correlations.csv"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("run_record.json")).unwrap())
            .unwrap();
    assert_eq!(record["suite"], "analyze");
    assert_eq!(record["passed"], true);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pass"), "{stdout}");
}

#[test]
fn seed_override_lands_in_run_record() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), "{}");
    let out = ibflow()
        .args([
            "analyze",
            "--config",
            &config,
            "--seed",
            "77",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("run_record.json")).unwrap())
            .unwrap();
    assert_eq!(record["master_seed"], 77);
}

#[test]
fn simulate_samples_are_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"replicas": 4, "horizon": 0.4, "master_seed": 9,
            "scheme": {"dt": 0.02},
            "curve": {"kind": "circle", "radius": 1.0, "max_points": 24}}"#,
    );
    let mut bytes = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = ibflow()
            .args(["simulate", "--config", &config, "--out", out_dir.to_str().unwrap()])
            .env("IBFLOW_WORKERS", "1")
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        bytes.push((
            fs::read(out_dir.join("simulate_samples.jsonl")).unwrap(),
            fs::read(out_dir.join("simulate_diameter.csv")).unwrap(),
        ));
    }
    assert_eq!(bytes[0].0, bytes[1].0, "JSONL streams differ between reruns");
    assert_eq!(bytes[0].1, bytes[1].1, "CSV plot data differs between reruns");
    assert!(!bytes[0].0.is_empty());
}

#[test]
fn bad_worker_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "{}");
    let out = ibflow()
        .args(["analyze", "--config", &config])
        .env("IBFLOW_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_numbers_carry_nine_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), "{}");
    let out = ibflow()
        .args(["analyze", "--config", &config, "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(out_dir.join("analyze_correlations.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,b_l,b_n,b_l_d1,b_n_d1"));
    let first = lines.next().unwrap();
    let cell = first.split(',').nth(1).unwrap();
    // mantissa with 8 fractional digits, e.g. 9.98750625e-1
    assert!(cell.contains('e'), "{cell}");
    let mantissa = cell.split('e').next().unwrap();
    assert_eq!(mantissa.split('.').nth(1).map(str::len), Some(8), "{cell}");
}
