//! Exit codes, configuration precedence and artifacts of the `slowvar` binary.

use std::path::Path;
use std::process::{Command, Output};

use slowvar::artifacts::{sha256_hex, Manifest};

const TOY: &str = "
species = A, B
slow_weights = 0.5, 0.5
domain = 10..30, 10..30
reaction = 0 -> A @ 20
reaction = A -> B @ 80
reaction = B -> A @ 80
reaction = B -> 0 @ 1
";

fn slowvar(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slowvar"));
    cmd.args(args).env_remove("SLOWVAR_OUT");
    if let Some(dir) = env_out {
        cmd.env("SLOWVAR_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn unknown_stage_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = slowvar(&["plot", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = slowvar(&["covariance", "--eps", "-1", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
    let out = slowvar(&["covariance", "--rho", "wide", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let out = slowvar(&["covariance", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
    let out = slowvar(&["covariance", "--config", "/nonexistent/run.cfg"], None);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_prerequisite_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = slowvar(&["spectrum", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("graph"));
}

#[test]
fn environment_sets_the_output_directory_and_flags_win() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let out = slowvar(&["covariance", "--system", "cs1"], Some(env_dir.path()));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.path().join("covariance.csv").is_file());

    let out = slowvar(&["covariance", "--out", flag_dir.path().to_str().unwrap()], Some(env_dir.path()));
    assert_eq!(code(&out), 0);
    assert!(flag_dir.path().join("covariance.csv").is_file());
}

#[test]
fn full_run_on_a_network_file() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("toy.net");
    std::fs::write(&net, TOY).unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "lcs = 100, 400\nspectrum_k = 5\nt_end = 0.05\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = slowvar(
        &["all", "--config", cfg.to_str().unwrap(), "--system", net.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for stage in ["simulate", "covariance", "graph", "spectrum", "bin", "conditional", "stationary", "cma", "evaluate"] {
        assert!(stdout.contains(stage), "no summary line for {stage}");
    }

    let manifest: Manifest = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.stages.len(), 9);
    for record in manifest.stages.values() {
        assert_eq!(record.config_hash, manifest.config_hash);
        for (name, hash) in &record.outputs {
            assert_eq!(&sha256_hex(&std::fs::read(out_dir.join(name)).unwrap()), hash, "{name}");
        }
    }
    assert_eq!(manifest.stages["spectrum"].inputs["graph.bin"], manifest.stages["graph"].outputs["graph.bin"]);

    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    let rows = report.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["method"], "ADM-CLE");
    assert!(rows[0]["error"].as_f64().unwrap() < 0.2);
    assert!(!std::fs::read_dir(&out_dir).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}
