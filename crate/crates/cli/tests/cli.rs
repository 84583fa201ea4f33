use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn branchctl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchctl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("BRANCHCTL_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = branchctl(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str], cwd: &Path) -> String {
    let out = branchctl(args, cwd);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

/// SHA-256 of every file in `dir`, by name.
fn digests(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let bytes = fs::read(e.path()).unwrap();
            let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            (e.file_name().into_string().unwrap(), hex)
        })
        .collect()
}

const SMALL_SWEEP: &str = "preset = \"fig2a\"\n[sim]\noutput_samples = 200\n[sweep]\ngammas = [0.0, 100.0, 750.0]\n";

#[test]
fn eigen_prints_five_eigenvalues_with_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["eigen", "--preset", "fig2a", "--xi", "0.5", "--out", "e"], dir.path());
    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with(char::is_numeric)).collect();
    assert_eq!(rows.len(), 5, "{out}");
    for row in rows {
        let cols: Vec<f64> = row.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        assert!(cols[1] < 1e-12, "residual {row}");
        assert!((cols[0] - cols[2]).abs() <= 1e-9 * cols[0].abs().max(1.0), "{row}");
    }
    assert!(dir.path().join("e/eigen.txt").exists());
    assert!(dir.path().join("e/manifest.toml").exists());
}

#[test]
fn negative_gamma_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let err = fail(&["propagate", "--preset", "fig2a", "--gamma", "-1"], dir.path());
    assert!(err.contains("gamma must be ≥ 0"), "{err}");
    fs::write(dir.path().join("bad.toml"), "preset = \"fig2a\"\n[sim]\ngamma = -1.0\n").unwrap();
    let err = fail(&["propagate", "--config", "bad.toml"], dir.path());
    assert!(err.contains("gamma must be ≥ 0"), "{err}");
}

#[test]
fn config_errors_carry_position() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("typo.toml"), "preset = \"fig2b\"\n\n[pulses]\npeak_q = 3.0\n").unwrap();
    let err = fail(&["sweep-gamma", "--config", "typo.toml"], dir.path());
    assert!(err.contains("line 4, column 1") && err.contains("peak_q"), "{err}");
    let err = fail(&["sweep-gamma", "--preset", "fig9"], dir.path());
    assert!(err.contains("unknown preset"), "{err}");
    let err = fail(&["sweep-gamma"], dir.path());
    assert!(err.contains("--preset or --config"), "{err}");
}

#[test]
fn sweep_is_deterministic_and_rerunnable() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), SMALL_SWEEP).unwrap();
    ok(&["sweep-gamma", "--config", "s.toml", "--out", "a", "--plot"], dir.path());
    ok(&["sweep-gamma", "--config", "s.toml", "--out", "b", "--plot"], dir.path());
    let a = digests(&dir.path().join("a"));
    assert_eq!(a, digests(&dir.path().join("b")));
    for f in ["sweep.csv", "summary.txt", "summary.toml", "manifest.toml", "plot_sweep.py"] {
        assert!(a.contains_key(f), "missing {f}");
    }
    let csv = fs::read_to_string(dir.path().join("a/sweep.csv")).unwrap();
    assert!(csv.starts_with("gamma,P3_exact,P4_exact,B_exact,P3_theory,P4_theory,B_theory"));
    assert_eq!(csv.lines().count(), 4);

    ok(&["rerun", "a/manifest.toml", "--out", "c"], dir.path());
    assert_eq!(a, digests(&dir.path().join("c")));
}

#[test]
fn dephasing_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["dephasing", "--preset", "fig3", "--gamma", "6", "--seed", "42", "-n", "24"];
    let one: Vec<&str> = base.iter().copied().chain(["--jobs", "1", "--out", "one"]).collect();
    let three: Vec<&str> = base.iter().copied().chain(["--jobs", "3", "--out", "three"]).collect();
    let summary = ok(&one, dir.path());
    ok(&three, dir.path());
    assert_eq!(digests(&dir.path().join("one")), digests(&dir.path().join("three")));
    assert!(summary.contains("seed=42"));
    let toml = fs::read_to_string(dir.path().join("one/summary.toml")).unwrap();
    for key in ["final_p3", "final_p4", "branching", "realizations = 24", "master_seed = 42"] {
        assert!(toml.contains(key), "{key} missing from {toml}");
    }
}

#[test]
fn propagate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["propagate", "--preset", "fig2a", "--gamma", "750", "--out", "p"], dir.path());
    assert!(out.contains("regime"));
    let csv = fs::read_to_string(dir.path().join("p/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("xi,P1,P2,P3,P4,P5,norm"));
    assert_eq!(lines.count(), 2000);
}

#[test]
fn default_output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_branchctl"))
        .args(["eigen", "--preset", "fig2b"])
        .current_dir(dir.path())
        .env("BRANCHCTL_OUT", "root")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("root/fig2b/eigen/eigen.txt").exists());
}

#[test]
fn gamma_flag_rejected_for_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let err = fail(&["sweep-gamma", "--preset", "fig2a", "--gamma", "3"], dir.path());
    assert!(err.contains("does not apply"), "{err}");
}
