use std::fs;
use std::path::Path;
use std::process::Command;

use casimir_lab_cli::config::{parse_config, OUT_DIR_ENV};
use casimir_lab_cli::output::{series_csv, summary_json};
use casimir_lab_cli::presets::run_preset;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_casimir-lab");

fn run_bin(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).env(OUT_DIR_ENV, dir).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn summary(dir: &Path, preset: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(preset).join("summary.json")).unwrap()).unwrap()
}

#[test]
fn kdv_soliton_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run_bin(dir.path(), &["run", "kdv_soliton"]);
    assert_eq!(code, 0, "{stdout}");
    let s = summary(dir.path(), "kdv_soliton");
    assert!(s["metrics"]["soliton_linf_error"].as_f64().unwrap() <= 1e-3);
    assert_eq!(s["pass"], true);
    let csv = fs::read_to_string(dir.path().join("kdv_soliton/series.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,I1,I2,I3"));
    assert_eq!(csv.lines().count(), 1 + 101);
}

#[test]
fn phantom2_reports_zero_divergence() {
    let cfg = parse_config("phantom2", None, &[]).unwrap();
    let report = run_preset(&cfg).unwrap();
    assert_eq!(report.metrics["omega_max_divergence"], 0.0);
    assert!(report.passed());
    let json = summary_json(&report);
    assert_eq!(json["metrics"]["omega_max_divergence"].as_f64(), Some(0.0));
}

#[test]
fn rmhd2d_flags_enstrophy_as_expected_drift() {
    let cfg = parse_config("rmhd2d", None, &[]).unwrap();
    let report = run_preset(&cfg).unwrap();
    let c0 = report.functionals.iter().find(|f| f.label == "C0:square").unwrap();
    assert_eq!(c0.expectation.status(), "non-conserved (expected)");
    assert!(c0.last > 1e-4);
    assert!(report.passed());
}

#[test]
fn summary_has_required_fields() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run_bin(dir.path(), &["run", "finitedim", "--set", "t_end=1"]);
    assert_eq!(code, 0);
    let s = summary(dir.path(), "finitedim");
    for key in ["preset", "config", "functionals", "wall_time_s", "pass", "checks", "metrics"] {
        assert!(s.get(key).is_some(), "missing {key}");
    }
    let h = &s["functionals"][0];
    for key in ["initial", "final", "max_abs_drift", "max_relative_drift", "status", "pass"] {
        assert!(h.get(key).is_some(), "missing functional field {key}");
    }
    assert_eq!(s["config"]["t_end"], 1.0);
}

#[test]
fn csv_is_deterministic() {
    let overrides = ["t_end=0.5".to_string(), "seed=7".to_string()];
    let cfg = parse_config("euler2d", None, &overrides).unwrap();
    let a = series_csv(&run_preset(&cfg).unwrap().series);
    let b = series_csv(&run_preset(&cfg).unwrap().series);
    assert_eq!(a, b);
    let other = parse_config("euler2d", None, &["t_end=0.5".to_string(), "seed=8".to_string()]).unwrap();
    assert_ne!(a, series_csv(&run_preset(&other).unwrap().series));
}

#[test]
fn env_var_sets_output_directory_and_snapshots_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run_bin(dir.path(), &["run", "ionacoustic1d", "--set", "snapshots=true"]);
    assert_eq!(code, 0);
    let bytes = fs::read(dir.path().join("ionacoustic1d/state_final.bin")).unwrap();
    let end = bytes.windows(4).position(|w| w == b"END\n").unwrap() + 4;
    let header = std::str::from_utf8(&bytes[..end]).unwrap();
    assert!(header.contains("components rho v"));
    assert!(header.contains("grid line 128"));
    assert_eq!(bytes.len() - end, 2 * 128 * 8);
}

#[test]
fn blow_up_keeps_partial_series() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "run",
        "euler2d",
        "--set",
        "dt=1",
        "--set",
        "t_end=100",
        "--set",
        "output_every=1",
        "--set",
        r#"initial.omega.random={"kmax":8,"amplitude":200}"#,
    ];
    let (code, _, _) = run_bin(dir.path(), &args);
    assert_eq!(code, 1);
    let s = summary(dir.path(), "euler2d");
    assert_eq!(s["pass"], false);
    assert!(s["failure"]["step"].as_u64().is_some());
    let csv = fs::read_to_string(dir.path().join("euler2d/series.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_bin(dir.path(), &["run", "euler3d"]);
    assert_eq!(code, 2);
    assert!(err.contains("kdv_soliton"), "{err}");

    let (code, _, err) = run_bin(dir.path(), &["run", "euler2d", "--set", "dt=-0.1"]);
    assert_eq!(code, 2);
    assert!(err.contains("dt"), "{err}");

    let file = dir.path().join("bad.json");
    fs::write(&file, "{\n  \"preset\": \"euler2d\",\n  \"nn\": 64\n}\n").unwrap();
    let (code, _, err) = run_bin(dir.path(), &["validate", "--config", file.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("nn") && err.contains("line 3"), "{err}");
}

#[test]
fn validate_accepts_minimal_config() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("ok.json");
    fs::write(&file, r#"{"preset": "euler2d", "n": 64, "dt": 0.01, "t_end": 1}"#).unwrap();
    let (code, stdout, err) = run_bin(dir.path(), &["validate", "--config", file.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("100 steps"), "{stdout}");
}

#[test]
fn list_presets_names_all_ten() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run_bin(dir.path(), &["list-presets"]);
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), 10);
}
