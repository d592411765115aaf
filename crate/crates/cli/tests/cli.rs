//! Black-box tests of the `anchorinv` binary: artifacts, exit codes,
//! dry runs, and the diagnose recount.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_anchorinv")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn tiny_config(candidates: usize, obs_noise: f64) -> String {
    format!(
        r#"
seed = 11
[grid]
nx = 8
ny = 8
dx = 1.0
dy = 1.0

[truth]
beta = [0.5]
sigma2 = 1.0
phi = 3.0
kappa = 1.5

[type_a]
locations = [[1.0, 1.0]]

[[forward]]
kind = "linear-observer"
cells = [18, 27, 44]
noise_sd = {obs_noise}

[prior]
beta = [{{ uniform = {{ lo = -2.0, hi = 2.0 }} }}]
sigma2 = {{ log-uniform = {{ lo = 0.3, hi = 3.0 }} }}
phi = {{ log-uniform = {{ lo = 1.0, hi = 6.0 }} }}
lambda = {{ fixed = {{ value = 0.0 }} }}
kappa_set = [0.5, 1.5]
nugget = 0.0

[anchors]
strategy = "coverage"
count = 4

[inversion]
candidates = {candidates}
realizations = 90

[predict]
fields = 8
targets = [[4.0, 4.0]]

[select_anchors]
counts = [2, 4]
stability_tol = 10.0
"#
    )
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

#[test]
fn dry_run_prints_plan_without_computing() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(10, 0.1));
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "invert",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("dry run: invert"), "{stdout}");
    assert!(stdout.contains("config hash"), "{stdout}");
    assert!(!out_dir.exists(), "dry run must not create outputs");
}

#[test]
fn invert_writes_documented_layout_and_diagnose_recounts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(12, 0.1));
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "invert",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--dump-clouds",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "manifest.json",
        "candidates.csv",
        "config.toml",
        "truth.bin",
        "truth.meta.json",
        "truth.csv",
        "za.csv",
        "zb.csv",
        "summary/mean.csv",
        "summary/sd.csv",
        "summary/q05.csv",
        "summary/q50.csv",
        "summary/q95.csv",
        "summary/targets.csv",
        "fields/field_0000.bin",
        "fields/index.csv",
        "clouds/candidate_0000.csv",
    ] {
        assert!(out_dir.join(f).exists(), "missing artifact {f}");
    }
    // one cloud per candidate, one row per realization
    let cloud = std::fs::read_to_string(out_dir.join("clouds/candidate_0003.csv")).unwrap();
    assert_eq!(cloud.lines().count(), 91, "header + 90 realizations");
    assert!(cloud.lines().next().unwrap().starts_with("realization,z_0"));

    let diag = run(&["diagnose", out_dir.to_str().unwrap()]);
    assert!(
        diag.status.success(),
        "{}",
        String::from_utf8_lossy(&diag.stderr)
    );
    let text = String::from_utf8(diag.stdout).unwrap();
    assert!(text.contains("recount: OK"), "{text}");
    assert!(text.contains("kappa marginal"), "{text}");
}

#[test]
fn single_candidate_run_reports_unit_ess() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(1, 0.1));
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "invert",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let diag = run(&["diagnose", out_dir.to_str().unwrap()]);
    let text = String::from_utf8(diag.stdout).unwrap();
    assert!(text.contains("ESS                1.000"), "{text}");
}

#[test]
fn predict_regenerates_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(12, 0.1));
    let out_dir = tmp.path().join("run");
    assert!(run(&[
        "invert",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap()
    ])
    .status
    .success());
    let out = run(&[
        "predict",
        out_dir.to_str().unwrap(),
        "--fields",
        "5",
        "--seed",
        "99",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("fields/field_0004.bin").exists());
    let index = std::fs::read_to_string(out_dir.join("fields/index.csv")).unwrap();
    assert_eq!(index.lines().count(), 6, "header + 5 fields");
}

#[test]
fn select_anchors_writes_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(10, 0.2));
    let out_dir = tmp.path().join("sel");
    let out = run(&[
        "select-anchors",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("chosen anchor count"), "{stdout}");
    let entry: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("anchor_selection.json")).unwrap(),
    )
    .unwrap();
    assert!(entry["chosen"].is_number());
    assert_eq!(entry["trace"].as_array().unwrap().len(), 2);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    // missing file
    let out = run(&[
        "invert",
        "--config",
        "/nonexistent.toml",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // malformed TOML
    let bad = write_config(tmp.path(), "seed = [not toml");
    let out = run(&[
        "invert",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // well-formed but invalid: type-A point off the grid
    let mut cfg = tiny_config(5, 0.1);
    cfg = cfg.replace("locations = [[1.0, 1.0]]", "locations = [[99.0, 1.0]]");
    let bad = write_config(tmp.path(), &cfg);
    let out = run(&[
        "invert",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // diagnose on an empty directory names the missing manifest
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = run(&["diagnose", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));
}

#[test]
fn all_degenerate_likelihoods_exit_4() {
    // a zero-weight observer returns the same constant for every field; with
    // no observation noise every candidate's density estimate is degenerate
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(6, 0.0);
    cfg = cfg.replace(
        "kind = \"linear-observer\"\ncells = [18, 27, 44]",
        "kind = \"linear-observer\"\nweights = [[0.0]]",
    );
    // weights need one entry per cell
    cfg = cfg.replace(
        "weights = [[0.0]]",
        &format!("weights = [[{}]]", vec!["0.0"; 64].join(", ")),
    );
    let config = write_config(tmp.path(), &cfg);
    let out = run(&[
        "invert",
        "--config",
        config.to_str().unwrap(),
        "--out",
        tmp.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("[stage inversion]"));
}

#[test]
fn seed_override_changes_results_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(8, 0.1));
    let run_with = |name: &str, seed: &str| {
        let out_dir = tmp.path().join(name);
        assert!(run(&[
            "invert",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap()
        ])
        .status
        .success());
        std::fs::read(out_dir.join("candidates.csv")).unwrap()
    };
    let a = run_with("a", "5");
    let b = run_with("b", "5");
    let c = run_with("c", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
}
