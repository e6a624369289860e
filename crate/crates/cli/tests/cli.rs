use std::process::Command;

fn cyltomo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cyltomo"))
}

const SMALL: &[&str] = &["--forward-h", "0.05", "--inverse-h", "0.1", "--n-phi", "16", "--max-iters", "3"];

#[test]
fn run_prints_metrics_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = cyltomo().arg("run").args(SMALL).arg("--output-dir").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["iterations"], 3);
    assert_eq!(metrics["config"]["n_phi"], 16);
    assert!(dir.path().join("metrics.json").is_file());
}

#[test]
fn forward_then_invert_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let fwd = cyltomo().arg("forward").args(SMALL).arg("--output-dir").arg(&data).output().unwrap();
    assert!(fwd.status.success(), "{}", String::from_utf8_lossy(&fwd.stderr));
    assert!(data.join("tables/source_000.bin").is_file());
    let inv = cyltomo().arg("invert").args(SMALL).arg("--data").arg(&data).output().unwrap();
    assert!(inv.status.success(), "{}", String::from_utf8_lossy(&inv.stderr));
    let run = cyltomo().arg("run").args(SMALL).output().unwrap();
    let strip = |b: &[u8]| {
        let mut v: serde_json::Value = serde_json::from_slice(b).unwrap();
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    assert_eq!(strip(&inv.stdout), strip(&run.stdout));
}

#[test]
fn config_file_is_read_and_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"forward_h": 0.05, "inverse_h": 0.1, "n_phi": 16, "max_iters": 5, "lambda": 1}"#).unwrap();
    let out = cyltomo().args(["run", "--max-iters", "2", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["iterations"], 2);
    assert_eq!(metrics["config"]["lambda"], 1.0);
}

#[test]
fn sweep_prints_a_table() {
    let out = cyltomo().args(["sweep", "--param", "N", "--values", "2,4"]).args(SMALL).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config: "));
    assert!(lines[1].starts_with("N,relative_l2_error"));
    assert_eq!(lines.len(), 4);
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let bad = cyltomo().args(["run", "--lambda", "-1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(cyltomo().arg("run").arg("--config").arg(&cfg).output().unwrap().status.code(), Some(2));
    assert_eq!(cyltomo().args(["forward"]).args(SMALL).output().unwrap().status.code(), Some(2));
    assert_eq!(cyltomo().args(["run", "--no-such-flag"]).output().unwrap().status.code(), Some(2));
    let workers = cyltomo().args(["run"]).args(SMALL).env("CYLTOMO_WORKERS", "zero").output().unwrap();
    assert_eq!(workers.status.code(), Some(2));
}

#[test]
fn missing_data_directory_is_an_io_error() {
    let out = cyltomo().args(["invert", "--data", "/nonexistent/cyltomo"]).args(SMALL).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_reports_all_checks_passing() {
    let out = cyltomo().arg("verify").env("CYLTOMO_WORKERS", "1").output().unwrap();
    assert!(out.status.success());
    let d: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = d["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["passed"] == true));
}
