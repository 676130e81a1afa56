//! Exit codes and outputs of the `isac` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn isac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac")).args(args).output().unwrap()
}

#[test]
fn missing_config_exits_two() {
    let out = isac(&["solve", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn unknown_key_exits_two_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(config("fig2_body.json")).unwrap()).unwrap();
    v["array"]["n_tx_typo"] = serde_json::json!(4);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = isac(&["heatmap", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("array.n_tx_typo"));
}

#[test]
fn validate_passes_and_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = isac(&["validate", "--config", config("fig2_body.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    for check in ["derivative_fd", "fim_scaling_block_len", "fim_scaling_rho", "schur_epigraph", "rank_one_defect_audit"] {
        assert!(stdout.contains(check), "missing {check}");
    }
    assert!(dir.path().join("validate.txt").exists());
    assert!(dir.path().join("validate.meta").exists());
}

#[test]
fn solve_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(config("fig2_body.json")).unwrap()).unwrap();
    v["run"]["design"] = serde_json::json!("genie");
    let path = dir.path().join("genie.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out_dir = dir.path().join("out");
    let out = isac(&["solve", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("wrote 1 rows"));
    let csv = std::fs::read_to_string(out_dir.join("genie.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(out_dir.join("genie.meta").exists());
}

#[test]
fn infeasible_threshold_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(config("fig2_body.json")).unwrap()).unwrap();
    v["run"]["design"] = serde_json::json!("genie");
    v["opt"]["r_th_bps"] = serde_json::json!(60.0);
    let path = dir.path().join("infeasible.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = isac(&["solve", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
