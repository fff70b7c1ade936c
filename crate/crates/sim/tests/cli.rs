use std::path::Path;
use std::process::{Command, Output};
use zonowalk_sim::recipe::init_models;

fn zonowalk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zonowalk"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(zonowalk(&["simulate", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(zonowalk(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(zonowalk(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = zonowalk(&["train", "missing-dir"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing-dir"));

    std::fs::write(dir.path().join("bad.toml"), "[mpc]\nhorizon_typo = 3\n").unwrap();
    let out = zonowalk(&["--config", "bad.toml", "simulate", "--trials", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    init_models(7).save(dir.path().join("m.ckpt")).unwrap();
    let out = zonowalk(
        &["simulate", "--peds", "5", "--trials", "1", "--seed", "7", "--steps", "4", "--ckpt", "m.ckpt", "--out", "run", "--snapshot-every", "2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    let metrics = std::fs::read_to_string(run.join("metrics_seed7_peds5.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    assert!(run.join("timing_seed7_peds5.csv").exists());
    assert!(run.join("trial_seed7_peds5_steps.csv").exists());
    assert!(run.join("svg/trial_seed7_peds5_step000.svg").exists());
}
