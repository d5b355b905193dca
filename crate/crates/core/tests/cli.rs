use std::path::Path;
use std::process::{Command, Output};

use lrm::calibration::{self, BoundTag, CalibrationParams};
use lrm::datagen::Dataset;
use lrm::solver::FitResult;

fn lrm(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lrm"));
    cmd.args(args).env_remove("LRM_SEED");
    if let Some(s) = seed_env {
        cmd.env("LRM_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, seed: Option<&str>, env: Option<&str>) -> String {
    let out = dir.join(name);
    let mut args = vec![
        "gen", "--scenario", "usr", "--m", "20", "--T", "20", "--r", "2", "--N", "2000", "--sigma", "1.0", "-o",
    ];
    args.push(path_str(&out));
    if let Some(s) = seed {
        args.extend(["--seed", s]);
    }
    let o = lrm(&args, env);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn gen_then_fit_uses_calibrated_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let text = gen(dir.path(), "d.json", Some("42"), None);
    let data = Dataset::from_json(&text).unwrap();
    assert_eq!(data.n_obs(), 2000);
    assert_eq!(data.to_json().unwrap(), text.trim_end());

    let fit_path = dir.path().join("fit.json");
    let data_path = dir.path().join("d.json");
    let o = lrm(
        &[
            "fit", "--data", path_str(&data_path), "--p", "1", "--lambda", "auto:tau2", "--D", "2", "--H", "1", "-o",
            path_str(&fit_path),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = FitResult::from_json(&std::fs::read_to_string(fit_path).unwrap()).unwrap();
    let mut params = CalibrationParams::new(1.0, 20, 20, 2000);
    params.d_conf = Some(2.0);
    params.h = Some(1.0);
    assert_eq!(fit.lambda_used, calibration::lambda_auto(BoundTag::Tau2, &params).unwrap());
}

#[test]
fn seed_determines_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.json", Some("7"), None);
    let b = gen(dir.path(), "b.json", Some("7"), Some("99"));
    let c = gen(dir.path(), "c.json", None, Some("7"));
    let d = gen(dir.path(), "d.json", Some("8"), None);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, d);
}

#[test]
fn calibrate_prints_value() {
    let o = lrm(
        &["calibrate", "--bound", "tau4", "--sigma", "1", "--D", "2", "--m", "10", "--T", "10", "--N", "100"],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("0.50596"));
}

#[test]
fn error_codes_and_prefix() {
    let o = lrm(&["nonsense"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("ERROR 2:"));

    let o = lrm(&["gen", "--scenario", "usr", "--m", "3"], None);
    assert_eq!(o.status.code(), Some(2));

    let o = lrm(&["fit", "--data", "/no/such/file.json", "--lambda", "0.1"], None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("ERROR 1:"));
    assert_eq!(err.lines().count(), 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"m\": 2}").unwrap();
    let o = lrm(&["fit", "--data", path_str(&bad), "--lambda", "0.1"], None);
    assert_eq!(o.status.code(), Some(1));

    let o = lrm(&["coverage", "--bound", "mt_ri", "--scenario", "usr", "--m", "4", "--T", "4", "--r", "1", "--N", "40"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn study_outputs_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rates.csv");
    let o = lrm(
        &[
            "rates", "--scenario", "usr", "--m", "6", "--T", "5", "--r", "1", "--N", "60,120", "--trials", "3", "--scale",
            "5", "--seed", "3", "--jobs", "2", "-o", path_str(&out),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next().unwrap(), lrm::experiments::CSV_HEADER);
    assert_eq!(csv.lines().count(), 7);
    let summary = std::fs::read_to_string(dir.path().join("rates_summary.csv")).unwrap();
    assert!(summary.starts_with("N,median_pred_sq,holds_rate"));
    assert!(summary.lines().last().unwrap().starts_with("slope,"));
}

#[test]
fn pack_writes_codewords() {
    let o = lrm(&["pack", "--n-bits", "16", "--min-dist", "2", "--target", "4", "--seed", "1"], None);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["codewords"].as_array().unwrap().len(), 4);
}
