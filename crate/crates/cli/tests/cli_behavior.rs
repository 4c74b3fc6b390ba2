//! End-to-end behavior of the `mwsmpc` binary: exit codes, output files,
//! and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mwsmpc"))
}

fn repo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../paper.cfg")
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let base = std::fs::read_to_string(repo_config()).unwrap();
    let mut text = base.replace("mc_samples = 10000", "mc_samples = 400");
    text = text.replace("missions = 10000", "missions = 10");
    text.push_str(extra);
    let path = dir.join("small.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn lqr_prints_gain_and_terminal_cost() {
    let out = run(bin().args(["lqr", "--config"]).arg(repo_config()));
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("K = [-0.6167, -1.2703]"), "{stdout}");
    assert!(stdout.contains("[2.0599, 0.5916]"), "{stdout}");
    assert!(stdout.contains("[0.5916, 1.4228]"), "{stdout}");
    assert!(stdout.contains("certified_S = 0.886294"), "{stdout}");
}

#[test]
fn missing_config_exits_one() {
    let out = run(bin().args(["lqr", "--config", "/nonexistent/nope.cfg"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn broken_config_exits_one_with_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    let text = std::fs::read_to_string(repo_config())
        .unwrap()
        .replace("gamma = 0.99", "gamma = 1.2");
    std::fs::write(&path, text).unwrap();
    let out = run(bin().args(["lqr", "--config"]).arg(&path));
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("gamma"), "{stderr}");
}

#[test]
fn unknown_subcommand_exits_one_with_usage() {
    let out = run(bin().arg("frobnicate"));
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn unrecoverable_start_exits_two() {
    // start in the safe corner whose one-step reachable line misses the
    // noise-tightened box entirely
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corner.cfg");
    let text = std::fs::read_to_string(repo_config())
        .unwrap()
        .replace("s0 = [-8, 0]", "s0 = [-10, -2]")
        .replace("mc_samples = 10000", "mc_samples = 200");
    std::fs::write(&path, text).unwrap();
    let out = run(bin().args(["mission", "--config"]).arg(&path).args(["--out"]).arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("infeasible"), "{stderr}");
}

#[test]
fn mission_writes_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = run(bin()
        .args(["mission", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path()));
    assert!(out.status.success());
    let trace = std::fs::read_to_string(dir.path().join("mission_trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,s1,s2,u1,Sk,Nk,qp_status,fallback,safe"
    );
    assert_eq!(trace.lines().count(), 13); // header + states 0..=11
    let first = lines.next().unwrap();
    assert!(first.starts_with("0,-8.000000,0.000000,"), "{first}");
}

#[test]
fn surface_grid_is_monotone_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["surface", "--n-max", "20", "--s-points", "11", "--out"])
        .arg(dir.path()));
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("swps_surface.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "N,S,bound");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20 * 11);
    for row in &rows {
        let (n, s, bound) = (row[0], row[1], row[2]);
        let expected = (n - 1.0) / n + s / n;
        assert!((bound - expected).abs() < 1e-6);
        assert!(bound >= s - 1e-9);
    }
}

#[test]
fn batch_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = run(bin()
            .args(["batch", "--config"])
            .arg(&cfg)
            .args(["--seed", "7", "--traces", "--out"])
            .arg(out));
        assert!(res.status.success());
    }
    for file in ["batch_summary.csv", "batch_steps.csv"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let a = std::fs::read(out_a.join("traces/mission_00003.csv")).unwrap();
    let b = std::fs::read(out_b.join("traces/mission_00003.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_flag_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, seed) in [(&out_a, "7"), (&out_b, "8")] {
        let res = run(bin()
            .args(["batch", "--config"])
            .arg(&cfg)
            .args(["--seed", seed, "--traces", "--out"])
            .arg(out));
        assert!(res.status.success());
    }
    let a = std::fs::read(out_a.join("traces/mission_00000.csv")).unwrap();
    let b = std::fs::read(out_b.join("traces/mission_00000.csv")).unwrap();
    assert_ne!(a, b, "different seeds should change the trace");
}
