//! End-to-end behavior of the `herglotz` binary.

use std::path::Path;
use std::process::{Command, Output};

fn herglotz(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_herglotz"))
        .current_dir(dir)
        .args(args)
        .env_remove("HERGLOTZ_THREADS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn rigid_body_csv_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "rb.toml", "[scenario]\nname = \"rigid_body\"\n");
    let out = herglotz(dir.path(), &["run", "rb.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("herglotz_rigid_body.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 10_001 + 1);
    // t, 3 fiber coordinates, z, ell, lambda, E, one section
    assert!(lines.iter().all(|l| l.split(',').count() == 9));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 10.0).abs() < 1e-12);
    assert!(dir.path().join("herglotz_rigid_body_invariants.json").exists());
}

#[test]
fn overrides_and_report_contents() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "r.toml", "seed = 3\n[scenario]\nname = \"rayleigh\"\n[checks]\nconnection_independence = true\n");
    let out = herglotz(
        dir.path(),
        &["run", "r.toml", "--horizon", "0.5", "--step", "0.01", "--seed", "9", "--output-prefix", "nested/dir/r"],
    );
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("nested/dir/r_report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 9);
    assert_eq!(report["samples"], 51);
    assert_eq!(report["overall_pass"], true);
    assert_eq!(report["checks"][0]["name"], "connection_independence");
    let csv = std::fs::read_to_string(dir.path().join("nested/dir/r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52);
}

#[test]
fn unknown_keys_warn_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "r.toml", "[scenario]\nname = \"rayleigh\"\nhorizon = 0.1\ncolour = \"red\"\n[extra]\nx = 1\n");
    let out = herglotz(dir.path(), &["run", "r.toml"]);
    assert_eq!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "red.toml", "[scenario]\nname = \"rayleigh\"\n[checks]\nreduction_crosscheck = true\n");
    write(dir.path(), "spd.toml", "[scenario]\nname = \"rigid_body\"\ninertia = [1.0, -1.0, 3.0]\n");
    write(dir.path(), "ok.toml", "[scenario]\nname = \"rayleigh\"\nhorizon = 0.1\n");
    assert_eq!(herglotz(dir.path(), &["verify", "red.toml"]).status.code(), Some(2));
    assert_eq!(herglotz(dir.path(), &["run", "spd.toml"]).status.code(), Some(2));
    assert_eq!(herglotz(dir.path(), &["run", "ok.toml", "--step", "-1"]).status.code(), Some(2));
    assert_eq!(herglotz(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let threads = Command::new(env!("CARGO_BIN_EXE_herglotz"))
        .current_dir(dir.path())
        .args(["run", "ok.toml"])
        .env("HERGLOTZ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn list_and_help_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = herglotz(dir.path(), &["list-scenarios"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in herglotz_core::scenarios::SCENARIO_NAMES {
        assert!(text.contains(name));
    }
    assert_eq!(herglotz(dir.path(), &["--help"]).status.code(), Some(0));
}
