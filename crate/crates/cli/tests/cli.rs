use std::path::PathBuf;
use std::process::{Command, Output};

fn homog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homog")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("homog-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn cordes_check_reports_and_succeeds() {
    let out = homog(&["cordes-check", "--resolution", "64", "--random", "100", "--seed", "7"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("holds") && text.contains("seed 7"), "{text}");
    assert_eq!(stdout(&homog(&["cordes-check", "--resolution", "64", "--random", "100", "--seed", "7"])), text);
}

#[test]
fn cordes_violation_exits_two() {
    let dir = scratch("cordes");
    let path = dir.join("flat.json");
    std::fs::write(&path, r#"{"n": 2, "grid": 1, "cells": [[1, 0, 1e-17]]}"#).unwrap();
    let out = homog(&["cordes-check", "--coefficient", path.to_str().unwrap(), "--resolution", "4"]);
    let study = homog(&["study", "--coefficient", path.to_str().unwrap(), "--dyadic-N", "4,8"]);
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(study.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&study.stderr).contains("Cordes"));
}

#[test]
fn bad_input_exits_two() {
    assert_eq!(homog(&["effective", "--coefficient", "no-such-field"]).status.code(), Some(2));
    assert_eq!(homog(&["study", "--dyadic-N", "16,8"]).status.code(), Some(2));
    assert_eq!(homog(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(homog(&["study", "--coefficient", "ca-m-generic", "--dyadic-N", "4,8"]).status.code(), Some(2));
}

#[test]
fn study_csv_to_stdout_and_file() {
    let args = ["study", "--dyadic-N", "4,8", "--nondyadic-N", "5,9"];
    let out = homog(&args);
    assert!(out.status.success());
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# "));
    assert_eq!(lines[1], "branch,N,h,err_r_l2,err_abar,c_h,min_r_h");
    assert_eq!(lines.len(), 6);

    let dir = scratch("study");
    let path = dir.join("study.csv");
    let mut with_out = args.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    let out = homog(&with_out);
    let written = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(out.status.success());
    assert_eq!(written, csv);
    assert!(stdout(&out).contains("slope"));
}

#[test]
fn invariant_and_effective_output() {
    let out = homog(&["invariant", "--N", "4,8"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("N,c_h,"));
    let out = homog(&["effective", "--method", "spectral", "--K", "8"]);
    let text = stdout(&out);
    assert!(out.status.success() && text.contains("A_bar_h") && text.contains("error"), "{text}");
}

#[test]
fn classify_with_cross_check() {
    let out = homog(&["classify", "--coefficient", "diag-type-eps", "--K", "8", "--cross-check"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("type-eps") && !text.contains("type-eps^2"), "{text}");
    assert!(text.contains("relative difference"));
    let out = homog(&["classify", "--K", "8"]);
    assert!(stdout(&out).contains("type-eps^2"));
}

#[test]
fn solve_writes_nodal_values() {
    let dir = scratch("solve");
    let path = dir.join("u.csv");
    let out = homog(&["solve", "--M", "8", "--N", "8", "--K", "0", "--domain", "2", "1", "--out", path.to_str().unwrap()]);
    let csv = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x1,x2,u");
    assert_eq!(lines.len(), 1 + 81);
    let last: Vec<f64> = lines[81].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[..2], [2.0, 1.0]);
    assert!(stdout(&out).contains("A_bar_h"));
}
