use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gyroshe::config::RunConfigFile;

const CONFIG: &str = r#"
[correlation]
kind = "gaussian_bump"
sigma2 = 1.0
ell = 1.0
envelope = "window"
t_support = 1.0
n = 1

[field]
modes = 16
block_length = 1.0
master_seed = 7

[kinetics]
epsilons = [0.006, 0.004]
particles = 20
realizations = 3
dt_per_gyro = 16
t_end = 0.5
init = { kind = "delta", e0 = 1.0 }

[she]
e_max = 4.0
cells = 40
dt = 0.005
coefficient_points = 21

[outputs]
dir = "OUT"
times = [0.25, 0.5]
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let out = dir.join("out");
    let path = dir.join("run.toml");
    fs::write(&path, text.replace("OUT", &out.display().to_string())).unwrap();
    path
}

fn gyroshe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gyroshe")).args(args).output().unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn coeff_writes_table_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = gyroshe(&["coeff", "--config", cfg.to_str().unwrap(), "--e", "0.25,1,4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = tmp.path().join("out/coeff.csv");
    assert_eq!(header(&csv), "e,method,a,stderr");
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    let a1: f64 = text.lines().nth(2).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((a1 - 1.41641515).abs() < 1e-6, "{a1}");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/coeff.manifest.json")).unwrap()).unwrap();
    let echoed = RunConfigFile::parse(manifest["config"].as_str().unwrap()).unwrap();
    let original = RunConfigFile::load(&cfg).unwrap();
    assert_eq!(echoed, original);
    assert_eq!(manifest["config_hash"].as_str().unwrap(), echoed.hash());
    assert_eq!(manifest["seeds"]["master_seed"], 7);
}

#[test]
fn ascending_epsilons_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &CONFIG.replace("[0.006, 0.004]", "[0.004, 0.006]"));
    let out = gyroshe(&["study", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kinetics.epsilons"));
}

#[test]
fn unknown_key_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &CONFIG.replace("modes = 16", "modes = 16\nnodes = 1"));
    let out = gyroshe(&["she", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nodes"));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(gyroshe(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(gyroshe(&["scaling"]).status.code(), Some(64));
    assert_eq!(gyroshe(&["scaling", "--alpha", "1", "--bogus"]).status.code(), Some(64));
    assert_eq!(gyroshe(&["--help"]).status.code(), Some(0));
}

#[test]
fn scaling_prints_beta() {
    let out = gyroshe(&["scaling", "--alpha", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["beta"], 1.0);
    assert_eq!(gyroshe(&["scaling", "--alpha", "4"]).status.code(), Some(1));
}

#[test]
fn she_records_boundary_contact() {
    let tmp = tempfile::tempdir().unwrap();
    // the boundary guard fires when the profile reaches e_max
    let text = CONFIG
        .replace("e_max = 4.0", "e_max = 1.2")
        .replace("cells = 40", "cells = 12")
        .replace("times = [0.25, 0.5]", "times = [0.1, 0.2, 0.3, 0.4, 0.5]");
    let cfg = write_config(tmp.path(), &text);
    let out = gyroshe(&["she", "--config", cfg.to_str().unwrap()]);
    // she records a failed fit without aborting
    assert_eq!(out.status.code(), Some(0));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/she_fit.json")).unwrap()).unwrap();
    assert!(fit["fit"]["beta_hat"].is_null());
}

#[test]
fn she_then_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = gyroshe(&["she", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let she = tmp.path().join("out/she.csv");
    assert_eq!(header(&she), "time,e_center,density");
    let out = gyroshe(&["compare", she.to_str().unwrap(), she.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["l1"], 0.0);
    assert_eq!(v["time_a"], 0.5);
}

#[test]
fn compare_grid_mismatch_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    fs::write(&a, "time,e_center,density\n1,0.5,0.5\n1,1.5,0.5\n").unwrap();
    fs::write(&b, "time,e_center,density\n1,0.25,1\n1,0.75,1\n").unwrap();
    let out = gyroshe(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_and_study_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = gyroshe(&["--threads", "1", "simulate", "--config", cfg.to_str().unwrap(), "--epsilon", "0.006"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&tmp.path().join("out/simulate_eps0.006.csv")), "time,e_center,density,stderr");

    let out = gyroshe(&["study", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&tmp.path().join("out/study.csv")), "epsilon,time,l1,l2,w1,l1_stderr,stderr_budget,out_of_range");
    assert_eq!(header(&tmp.path().join("out/kinetic_eps0.004.csv")), "time,e_center,density,stderr");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/study_report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);

    // same config, same numbers
    let first = fs::read_to_string(tmp.path().join("out/study.csv")).unwrap();
    let out = gyroshe(&["--threads", "1", "study", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(first, fs::read_to_string(tmp.path().join("out/study.csv")).unwrap());
}

#[test]
fn field_validate_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = gyroshe(&["field-validate", "--config", cfg.to_str().unwrap(), "--lags", "3", "--realizations", "200"]);
    let code = out.status.code();
    assert!(code == Some(0) || code == Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&tmp.path().join("out/field_correlation.csv")), "tau,x1,x2,target,estimate,stderr");
    let text = fs::read_to_string(tmp.path().join("out/field_correlation.csv")).unwrap();
    assert_eq!(text.lines().count(), 10);
}
