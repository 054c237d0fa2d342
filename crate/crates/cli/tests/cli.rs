//! Command-line behavior: dry runs, dataset generation, config errors.

use std::path::Path;
use std::process::Command;

fn blockprox() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blockprox"))
}

fn repo_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

#[test]
fn dry_run_prints_plan_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let output = blockprox()
        .args([
            "run",
            &repo_config("synthetic48.toml"),
            "--output-dir",
            out.to_str().unwrap(),
            "--dry-run",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("B=50"), "plan should list block counts: {text}");
    assert!(!out.exists(), "dry run must not create artifacts");
}

#[test]
fn gen_data_writes_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let output = blockprox()
        .args([
            "gen-data",
            &repo_config("synthetic48.toml"),
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let data = blockprox::problems::LabeledDataset::load_csv(&dir.path().join("dataset.csv"))
        .unwrap();
    assert_eq!(data.n_samples(), 240);
    assert_eq!(data.dimension(), 50);
}

#[test]
fn unknown_config_key_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(repo_config("quadratic_small.toml")).unwrap();
    std::fs::write(&path, text + "\n[algorithm2]\nx = 1\n").unwrap();
    let output = blockprox()
        .args(["run", path.to_str().unwrap(), "--dry-run"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8(output.stderr).unwrap();
    assert!(err.contains("error"), "stderr: {err}");
}

#[test]
fn verify_rejects_unknown_suite() {
    let output = blockprox().args(["verify", "nonsense"]).output().unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8(output.stderr).unwrap();
    assert!(err.contains("unknown suite"), "stderr: {err}");
}

#[test]
fn solve_reference_reports_closed_form_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let output = blockprox()
        .args([
            "solve-reference",
            &repo_config("quadratic_small.toml"),
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("f* = "), "{text}");
}

#[test]
fn verify_prox_suite_passes() {
    let output = blockprox().args(["verify", "prox"]).output().unwrap();
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(output.status.success(), "{text}");
    assert!(text.contains("[PASS] prox.quadratic_closed_form"), "{text}");
}
