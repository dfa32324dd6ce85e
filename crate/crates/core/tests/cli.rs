//! End-to-end tests of the command-line interface: config validation,
//! artifact layout, checkpoint resume fidelity, and the criteria / report
//! subcommands.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use vesiflow::checkpoint;

const BIN: &str = env!("CARGO_BIN_EXE_vesiflow");

fn run_cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMOKE_CONFIG: &str = r#"
[grid]
dimension = 2
resolution = 16

[model]
epsilon = 0.1
mobility = 0.02
viscosity = 0.1
volume_penalty = 20.0
area_penalty = 20.0
# explicit targets so a resumed run reconstructs identical parameters
# (auto-filled targets would be re-derived from the checkpointed state)
volume_target = 0.0
area_target = 2.0

[step]
dt = 1e-4
scheme = "imex_bdf2"

[run]
t_end = 2e-3
record_every = 5

[initial_condition]
kind = "random"
seed = 3
band = 3
amplitude = 0.2

[initial_velocity]
kind = "random_solenoidal"
seed = 4
band = 2
amplitude = 0.2

[[criteria]]
kind = "serrin_gradient"
p = 4.0
s = 4.0
"#;

fn write_smoke_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, SMOKE_CONFIG).unwrap();
    path
}

#[test]
fn rejects_unknown_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        SMOKE_CONFIG.replace("viscosity = 0.1", "viscocity = 0.1"),
    )
    .unwrap();
    let out = run_cli(&["simulate", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("error[config]"), "stderr: {err}");
    assert!(err.contains("viscocity"), "stderr: {err}");
}

#[test]
fn rejects_inadmissible_criterion_in_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        SMOKE_CONFIG.replace("kind = \"serrin_gradient\"", "kind = \"serrin_velocity\"")
            .replace("p = 4.0", "p = 2.0"),
    )
    .unwrap();
    let out = run_cli(&["simulate", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("3 < p <= inf"), "stderr: {err}");
}

#[test]
fn rejects_bad_flag_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(dir.path());
    let cfg = cfg.to_str().unwrap();

    let out = run_cli(&["simulate", "--config", cfg, "--record-every", "0"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("error[parameter]"));

    let out = run_cli(&["simulate", "--config", cfg, "--dt=-1e-4"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("error[parameter]"));
}

#[test]
fn env_overrides_apply_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(dir.path());
    let out = Command::new(BIN)
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .env("VESIFLOW_MODEL__EPSILON", "-1.0")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("epsilon"), "stderr: {err}");
}

#[test]
fn rejects_missing_resume_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(dir.path());
    let out = run_cli(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--resume",
        dir.path().join("nope.vfcp").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("error[checkpoint]"));
}

#[test]
fn simulate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run_cli(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let csv = std::fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    let header = lines.next().unwrap();
    for col in ["t", "total_energy", "grad_u_l2", "crit_serrin_gradient_p4_s4"] {
        assert!(header.split(',').any(|c| c == col), "missing column {col}: {header}");
    }
    // 20 steps recorded every 5, plus the initial row
    assert_eq!(lines.count(), 5, "unexpected number of data rows");

    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("total energy"), "summary:\n{summary}");
    assert!(out_dir.join("checkpoint.vfcp").is_file());
}

/// A run split by a checkpoint must rejoin the uninterrupted trajectory:
/// the two-step scheme carries one history level through the checkpoint.
#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(dir.path());
    let cfg = cfg.to_str().unwrap();

    let full = dir.path().join("full");
    let out = run_cli(&[
        "simulate", "--config", cfg,
        "--t-end", "4e-3",
        "--output", full.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let half = dir.path().join("half");
    let out = run_cli(&[
        "simulate", "--config", cfg,
        "--output", half.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let resumed = dir.path().join("resumed");
    let out = run_cli(&[
        "simulate", "--config", cfg,
        "--t-end", "4e-3",
        "--resume", half.join("checkpoint.vfcp").to_str().unwrap(),
        "--output", resumed.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let a = checkpoint::load(&full.join("checkpoint.vfcp"), None, true)
        .unwrap()
        .checkpoint;
    let b = checkpoint::load(&resumed.join("checkpoint.vfcp"), None, true)
        .unwrap()
        .checkpoint;
    let dphi = a.state.phi.sub(&b.state.phi).unwrap().max_abs();
    assert!(dphi <= 1e-12, "phase fields differ by {dphi:.3e}");
    for (x, y) in a.state.u.components().iter().zip(b.state.u.components()) {
        let du = x.sub(y).unwrap().max_abs();
        assert!(du <= 1e-12, "velocity components differ by {du:.3e}");
    }
    assert!((a.state.t - b.state.t).abs() <= 1e-12);
}

#[test]
fn criteria_validates_and_integrates() {
    let out = run_cli(&[
        "criteria",
        "--spec", "serrin_gradient:4:4",
        "--spec", "serrin_velocity:inf:2",
        "--spec", "log_gradient:6:2",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    for id in [
        "valid: serrin_gradient_p4_s4",
        "valid: serrin_velocity_pinf_s2",
        "valid: log_gradient_p6_s2",
    ] {
        assert!(text.contains(id), "stdout: {text}");
    }

    let out = run_cli(&["criteria", "--spec", "serrin_velocity:4:4"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("3/p + 2/s <= 1"), "stderr: {}", stderr_of(&out));

    let out = run_cli(&["criteria", "--spec", "serrin_gradient:4"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("kind:p:s"), "stderr: {}", stderr_of(&out));

    // integrate over a recorded history
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run_cli(&[
        "simulate",
        "--config", cfg.to_str().unwrap(),
        "--output", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let out = run_cli(&[
        "criteria",
        "--spec", "serrin_gradient:4:4",
        "--input", out_dir.join("diagnostics.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(
        text.contains("integral serrin_gradient_p4_s4 ="),
        "stdout: {text}"
    );
}

#[test]
fn report_digests_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run_cli(&[
        "simulate",
        "--config", cfg.to_str().unwrap(),
        "--output", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let rep_dir = dir.path().join("rep");
    let out = run_cli(&[
        "report",
        "--input", out_dir.join("diagnostics.csv").to_str().unwrap(),
        "--config", cfg.to_str().unwrap(),
        "--output", rep_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("total energy"), "stdout: {text}");
    assert!(text.contains("energy monotone"), "stdout: {text}");
    assert!(rep_dir.join("summary.txt").is_file());
    assert!(rep_dir.join("plot.csv").is_file());
}
