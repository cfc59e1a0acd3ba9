//! Command-line behaviour and on-disk formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridtrack_harness::experiment::{rmse, state_rmse};
use gridtrack_harness::io;
use serde_json::Value;

const SMALL: &str = r#"{
    "grid": {"lower": [0, 25], "upper": [4, 25.6], "cells": [8, 8]},
    "transition": {"samples_per_cell": 400, "n_paths": 4, "path_length": 2000},
    "scene": {"sensors": {"random_lattice": {"count": 6}}},
    "queries": {"nx": 10, "ny": 10},
    "steps": 20,
    "snapshots": [10, 20]
}"#;

fn gridtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridtrack")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn transition_file_has_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = gridtrack(&["transition", "--config", s(&cfg), "--out", s(&out), "--mode", "marginal"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let bytes = std::fs::read(out.join("transition.bin")).unwrap();
    assert_eq!(&bytes[..8], b"CGRIDP1\0");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 64);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
    assert_eq!(bytes.len(), 16 + 8 * 64 * 64);
    let p = io::read_transition(&out.join("transition.bin")).unwrap();
    assert!(p.max_column_defect() <= 1e-12);
}

#[test]
fn config_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"steps": 5, "unexpected": true}"#);
    let res = gridtrack(&["track", "--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("unexpected"));

    let cfg = write_config(dir.path(), r#"{"scene": {"sigma_xi_sq": -1}}"#);
    let res = gridtrack(&["experiment", "--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("scene.sigma_xi_sq"));
}

#[test]
fn mismatched_transition_file_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = gridtrack(&["transition", "--config", s(&cfg), "--out", s(&out)]);
    assert!(res.status.success());
    let other = write_config(dir.path(), &SMALL.replace("[8, 8]", "[4, 4]"));
    let res = gridtrack(&["track", "--config", s(&other), "--transition", s(&out.join("transition.bin"))]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn zero_steps_writes_only_the_prior_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"lower": [0, 25], "upper": [4, 25.6], "cells": [5, 5]},
        "transition": {"samples_per_cell": 100}, "steps": 0, "snapshots": []}"#,
    );
    let out = dir.path().join("out");
    let res = gridtrack(&["track", "--config", s(&cfg), "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let trace = io::read_trace(&out.join("state_trace.csv")).unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(trace[0].t, 0);
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["rmse_state"].is_null());
}

#[test]
fn metrics_agree_with_written_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = gridtrack(&["experiment", "--config", s(&cfg), "--out", s(&out), "--seed", "9"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["resolved_seed"], 9);

    let trace = io::read_trace(&out.join("state_trace.csv")).unwrap();
    assert_eq!(trace.len(), 21);
    assert!(trace.iter().enumerate().all(|(k, r)| r.t == k));
    let est: Vec<Vec<f64>> = trace.iter().map(|r| r.estimate.clone()).collect();
    let truth: Vec<Vec<f64>> = trace.iter().map(|r| r.truth.clone()).collect();
    let recomputed = state_rmse(&est, &truth).unwrap();
    for (m, r) in recomputed.iter().enumerate() {
        let reported = metrics["rmse_state"][m].as_f64().unwrap();
        assert!((r - reported).abs() <= 1e-9, "coordinate {m}: {r} vs {reported}");
    }

    for (k, t) in [10, 20].iter().enumerate() {
        let (truth, pred) = io::read_map(&out.join(format!("map_t{t}.csv"))).unwrap();
        assert_eq!(truth.len(), 100);
        let reported = metrics["rmse_map"][k]["rmse"].as_f64().unwrap();
        assert!((rmse(&pred, &truth) - reported).abs() <= 1e-9);
    }

    let resolved = std::fs::read_to_string(out.join("config_resolved.json")).unwrap();
    let resolved = gridtrack_harness::ScenarioConfig::from_json(&resolved).unwrap();
    assert_eq!(resolved.seed, 9);
}

#[test]
fn saved_transition_reproduces_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(gridtrack(&["experiment", "--config", s(&cfg), "--out", s(&a), "--seed", "4"]).status.success());
    let res = gridtrack(&[
        "predict-map",
        "--config",
        s(&cfg),
        "--out",
        s(&b),
        "--seed",
        "4",
        "--transition",
        s(&a.join("transition.bin")),
    ]);
    assert!(res.status.success());
    for name in ["state_trace.csv", "map_t10.csv", "map_t20.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn oracle_check_passes() {
    let res = gridtrack(&["oracle-check", "--cases", "10", "--seed", "5"]);
    assert!(res.status.success());
    let text = String::from_utf8_lossy(&res.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("case")).count(), 10);
}
