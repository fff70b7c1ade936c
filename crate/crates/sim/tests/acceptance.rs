//! Acceptance checks 1 to 8, one line per check. Exits non-zero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use zonowalk_sim::selftest::{self, Check};
use zonowalk_sim::{Models, SimConfig};

const SEED: u64 = 0;

/// `simulate` run twice through the command line must write identical metrics.
fn cli_determinism(models: &Models) -> Check {
    let dir = tempfile::tempdir().expect("temp dir");
    let ckpt = dir.path().join("models.ckpt");
    let fail = |detail: String| Check {
        id: 8,
        name: "determinism",
        passed: false,
        detail,
    };
    if let Err(e) = models.save(&ckpt) {
        return fail(format!("saving checkpoint: {e:#}"));
    }
    let run = |out: &Path| -> Result<Vec<u8>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_zonowalk"))
            .args(["simulate", "--seed", "11", "--peds", "15", "--trials", "3", "--snapshot-every", "0"])
            .arg("--ckpt")
            .arg(&ckpt)
            .arg("--out")
            .arg(out)
            .stdout(Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("simulate exited with {status}"));
        }
        std::fs::read(out.join("metrics_seed11_peds15.csv")).map_err(|e| e.to_string())
    };
    match (run(&dir.path().join("a")), run(&dir.path().join("b"))) {
        (Ok(a), Ok(b)) => Check {
            id: 8,
            name: "determinism",
            passed: a == b && !a.is_empty(),
            detail: format!("simulate --seed 11 twice: {} and {} bytes, identical = {}", a.len(), b.len(), a == b),
        },
        (Err(e), _) | (_, Err(e)) => fail(e),
    }
}

fn main() -> ExitCode {
    let cfg = SimConfig::default();
    let mut checks = Vec::new();
    let mut report = |c: Check| {
        println!("{c}");
        checks.push(c);
    };
    report(selftest::geometry(10_000, SEED));
    report(selftest::halfspace(1_000, 1_000, SEED));
    report(selftest::lip_fidelity(1_000, SEED));
    report(selftest::gradients(24, SEED));
    let (c, models) = selftest::training(&cfg);
    report(c);
    match models {
        Some(m) => {
            let nav = selftest::run_navigation(&m, &cfg, 10, SEED);
            report(selftest::navigation(&nav, &cfg));
            report(selftest::solve_time(&nav));
            report(cli_determinism(&m));
        }
        None => {
            for (id, name) in [(6, "navigation protocol"), (7, "solve performance at 30 pedestrians"), (8, "determinism")] {
                report(Check {
                    id,
                    name,
                    passed: false,
                    detail: "no trained models".into(),
                });
            }
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("acceptance: {}/{} passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
