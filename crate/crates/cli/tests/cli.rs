//! The `ncft` binary: argument handling, exit codes and artifacts.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ncft(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ncft"));
    cmd.args(args).env_remove("NCFT_SEED");
    if let Some(s) = seed {
        cmd.env("NCFT_SEED", s);
    }
    cmd.output().unwrap()
}

/// The bundled baseline with a small calibration, written to `dir`.
fn small_config(dir: &Path, edit: impl FnOnce(&mut Value)) -> String {
    let text = ncft_core::acceptance::bundled_config("cubic-baseline").unwrap();
    let mut v: Value = serde_json::from_str(text).unwrap();
    v["calibration"]["samples"] = 700.into();
    v["tracking"]["t_final"] = 0.5.into();
    v["tracking"]["h"] = 0.02.into();
    edit(&mut v);
    let path = dir.join("config.in.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn invalid_theta_names_the_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |v| v["kinetics"]["law"]["theta"] = 1.2.into());
    let out = ncft(&["--config", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("H1"), "{err}");
}

#[test]
fn unknown_config_is_an_error() {
    let out = ncft(&["--config", "no-such-config"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-config"));
}

#[test]
fn malformed_seed_is_an_error() {
    let out = ncft(&["--config", "cubic-baseline", "--calibrate-only"], Some("abc"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NCFT_SEED"));
}

#[test]
fn empty_sweep_prints_the_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| {});
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"h": [], "theta": [], "gamma": [], "eps0": []}"#).unwrap();
    let out_dir = dir.path().join("sweep");
    let out = ncft(
        &[
            "--config",
            &cfg,
            "--sweep",
            grid.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("h,theta,gamma,eps0,status"));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn calibrate_only_honours_the_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| {});
    let run = |name: &str, seed: Option<&str>| {
        let out_dir = dir.path().join(name);
        let out = ncft(
            &[
                "--config",
                &cfg,
                "--calibrate-only",
                "--workers",
                "1",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            seed,
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out_dir.join("calibration.json").exists());
        assert!(!out_dir.join("trajectory.jsonl").exists());
        (
            read_json(&out_dir.join("MANIFEST.json")),
            read_json(&out_dir.join("calibration.json")),
        )
    };
    let (m0, c0) = run("default", None);
    let (m1, c1) = run("seeded", Some("7"));
    let (m2, c2) = run("seeded-again", Some("7"));
    assert_eq!(m1, m2);
    assert_eq!(m1["seed"], 7);
    assert_ne!(m0["seed"], m1["seed"]);
    assert_ne!(c0, c1);
    assert_eq!(c1, c2);
}

#[test]
fn short_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| {});
    let out_dir = dir.path().join("run");
    let out = ncft(&["--config", &cfg, "--out", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for f in [
        "config.json",
        "trajectory.jsonl",
        "events.jsonl",
        "functionals.csv",
        "cycles.json",
        "conformance.json",
        "calibration.json",
        "MANIFEST.json",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let m = read_json(&out_dir.join("MANIFEST.json"));
    assert_eq!(m["passed"], true);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS c11_conservation"));
}
