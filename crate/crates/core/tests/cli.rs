use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_divide-blo"));
    c.env("RUST_LOG", "warn");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn solve_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"problem": {"builtin": "sanity-quadratic"},
            "covering": {"method": "grid", "points_per_dim": 41},
            "solver": {"gamma": 5, "lambda": 0.01, "alpha": 0.01, "max_iters": 50},
            "metrics": {"grid_per_dim": 101}}"#,
    );
    let out_dir = dir.path().join("out");
    let stdout = ok(bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--seed", "3", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap());
    assert!(stdout.contains("violation"));
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,f_gamma,grad_map_norm,feasibility_gap,x_0,y_induced_0,wallclock_ms\n"));
    // Wall-clock time is off by default, so the last column is empty.
    assert!(trace.lines().skip(1).all(|l| l.ends_with(',')));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("divide-blo,5,0.01,,,0.01,41,3,"));
}

#[test]
fn baseline_trace_has_blank_feasibility_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"problem": {"builtin": "sanity-quadratic"},
            "baseline": {"algorithm": "ttsa", "eta1": 0.1, "eta2": 0.1, "max_iters": 5},
            "metrics": {"grid_per_dim": 101}}"#,
    );
    let out_dir = dir.path().join("out");
    ok(bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap());
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    for line in trace.lines().skip(1) {
        assert_eq!(line.split(',').nth(3), Some(""));
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"problem": {"builtin": "synthetic-1d"}, "solver": {"gamma": 1, "lambda": 1}, "colour": "red"}"#,
    );
    let out = bin().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.json",
        r#"{"problem": {"builtin": "sanity-quadratic"},
            "covering": {"method": "grid", "points_per_dim": 41},
            "metrics": {"grid_per_dim": 101},
            "sweep": {"seeds": 2,
                      "divide_blo": {"gamma": [5], "alpha": [0.01], "lambda": [0.01], "max_iters": 50},
                      "ttsa": {"eta1": [0.1], "eta2": [0.1], "max_iters": 20}}}"#,
    );
    let out_dir = dir.path().join("sweep");
    ok(bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--workers", "2"])
        .output()
        .unwrap());
    for f in ["summary.csv", "cells.csv", "best_cells.csv", "gap_series.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let report = ok(bin().arg("report").arg("--summary").arg(out_dir.join("summary.csv")).output().unwrap());
    assert!(report.starts_with("algorithm,gamma,alpha,eta1,eta2,lambda,k,runs,failed,"));
    assert!(report.lines().any(|l| l.starts_with("divide-blo,5,0.01,,,0.01,41,2,0,")));
    assert!(report.lines().any(|l| l.starts_with("ttsa,,,0.1,0.1,,,2,0,")));
}

#[test]
fn report_rejects_malformed_summary_with_row_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "summary.csv",
        "algorithm,gamma,alpha,eta1,eta2,lambda,k,seed,iters,violation,total_gap,status\n\
         ttsa,,,0.1,0.1,,,0,10,0.5,0.5,max_iters\n\
         ttsa,,,0.1,0.1,,,x,10,0.5,0.5,max_iters\n",
    );
    let out = bin().arg("report").arg("--summary").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3") && err.contains("seed"), "{err}");
}

#[test]
fn report_on_empty_summary_prints_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "summary.csv",
        "algorithm,gamma,alpha,eta1,eta2,lambda,k,seed,iters,violation,total_gap,status\n",
    );
    let out = ok(bin().arg("report").arg("--summary").arg(&path).output().unwrap());
    assert_eq!(out.lines().count(), 1);
}
