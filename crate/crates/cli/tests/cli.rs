use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_quasiwalk");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn quasiwalk(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.trim().lines().count(), 1, "one line of JSON: {text}");
    serde_json::from_str(text.trim()).expect("stderr is JSON")
}

fn small_walk(dir: &Path, extra: &[&str]) -> Output {
    let cfg = config("z_pm1.json");
    let mut args = vec!["walk", "--config", cfg.to_str().unwrap(), "--set", "walk.trials=50", "--set", "walk.n=64", "--out"];
    args.push(dir.to_str().unwrap());
    args.extend_from_slice(extra);
    quasiwalk(&args)
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = quasiwalk(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "usage");
    assert!(err["usage"].as_str().unwrap().starts_with("Usage:"));
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = small_walk(tmp.path(), &["--set", "walk.n=many"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("walk.n"));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"group\": {\"kind\": \"free\", \"rank\": 2},\n  \"colour\": 1\n}\n").unwrap();
    let out = quasiwalk(&["walk", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("line 3"));
}

#[test]
fn missing_config_is_reported() {
    let out = quasiwalk(&["clt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("--config"));
}

#[test]
fn capacity_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("f2_brooks.json");
    let out = quasiwalk(&["defect", "--config", cfg.to_str().unwrap(), "--set", "defect.cap=5", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "capacity");
}

#[test]
fn failed_gate_exits_with_four_only_under_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("z_pm1.json");
    let args = ["clt", "--config", cfg.to_str().unwrap(), "--set", "walk.trials=200", "--set", "walk.n=16", "--set", "walk.check.sigma=[5,6]", "--out", tmp.path().to_str().unwrap()];
    assert_eq!(quasiwalk(&args).status.code(), Some(0));
    let mut gated = args.to_vec();
    gated.push("--check");
    let out = quasiwalk(&gated);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("sigma-range"));
}

#[test]
fn reports_are_stamped_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = small_walk(a.path(), &[]);
    let second = small_walk(b.path(), &[]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout, "output dir is not part of the report");

    let report: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(report["command"], "walk");
    assert!(report["wall_time_ms"].is_null());
    assert_eq!(report["files"], serde_json::json!(["walk.csv", "walk.json"]));
    let hash = report["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);

    let csv = std::fs::read_to_string(a.path().join("walk.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), format!("# config_hash={hash} seed=20240501"));
    assert_eq!(lines.next().unwrap(), "trial,word_length,phi_zn");
    assert_eq!(lines.count(), 50);

    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("walk.json")).unwrap()).unwrap();
    assert_eq!(on_disk, report);
}

#[test]
fn seed_override_changes_hash_and_samples() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base: Value = serde_json::from_slice(&small_walk(a.path(), &[]).stdout).unwrap();
    let other: Value = serde_json::from_slice(&small_walk(b.path(), &["--seed", "7"]).stdout).unwrap();
    assert_eq!(other["seed"], 7);
    assert_ne!(base["config_hash"], other["config_hash"]);
    assert_ne!(
        std::fs::read(a.path().join("walk.csv")).unwrap(),
        std::fs::read(b.path().join("walk.csv")).unwrap()
    );
}

#[test]
fn timing_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let report: Value = serde_json::from_slice(&small_walk(tmp.path(), &["--timing"]).stdout).unwrap();
    assert!(report["wall_time_ms"].is_u64());
}

#[test]
fn report_pools_runs_and_rejects_mismatches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("z_pm1.json");
    let cfg = cfg.to_str().unwrap();
    let mut files = Vec::new();
    for (i, n) in ["256", "256", "128"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        let seed = format!("{}", 100 + i);
        let out = quasiwalk(&["clt", "--config", cfg, "--seed", &seed, "--set", "walk.trials=2000", "--set", &format!("walk.n={n}"), "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(dir.join("clt.json").to_str().unwrap().to_string());
    }
    let out_dir = tmp.path().join("report");
    let pooled = quasiwalk(&["report", "--inputs", &files[0], &files[1], "--out", out_dir.to_str().unwrap()]);
    assert!(pooled.status.success(), "{}", String::from_utf8_lossy(&pooled.stderr));
    let doc: Value = serde_json::from_slice(&pooled.stdout).unwrap();
    assert_eq!(doc["clt"]["runs"], 2);
    assert_eq!(doc["clt"]["trials"], 4000);
    assert_eq!(doc["clt"]["moments"]["count"], 4000);

    let mixed = quasiwalk(&["report", "--inputs", &files[0], &files[2], "--out", out_dir.to_str().unwrap()]);
    assert_eq!(mixed.status.code(), Some(2));
    assert_eq!(stderr_json(&mixed)["error"], "incompatible");
}

#[test]
fn threads_zero_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = small_walk(tmp.path(), &["--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
