use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn homsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homsim"))
        .args(args)
        .output()
        .expect("run homsim")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn oracle_is_deterministic_for_a_seed() {
    let args = [
        "--seed",
        "11",
        "oracle",
        "--instances",
        "20",
        "--max-bins",
        "3",
    ];
    let a = homsim(&args);
    let b = homsim(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["passed"], Value::Bool(true));
}

#[test]
fn sweep_at_zero_noise_is_a_single_row() {
    let out = homsim(&[
        "sweep",
        "--m-s",
        "0.9",
        "--eta-max",
        "0",
        "--points",
        "1",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[0].starts_with("eta,g2,v_hom"));
    let fields: Vec<f64> = lines[1].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(&fields[..2], &[0.0, 0.0]);
    assert!((fields[2] - 0.9).abs() < 1e-12);
}

#[test]
fn slope_and_extract() {
    let slope = json(&homsim(&["slope", "--m-s", "0.94"]));
    assert!((slope["slope"].as_f64().unwrap() + 1.94).abs() < 1e-12);
    let ext = json(&homsim(&["extract", "--v", "0.824", "--g2", "0.05"]));
    assert!((ext["m_s"].as_f64().unwrap() - 0.92).abs() < 1e-12);
}

#[test]
fn invalid_parameter_exits_2_and_names_it() {
    let out = homsim(&["model", "--model", "exponential", "--gamma", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gamma"), "{}", stderr(&out));

    let out = homsim(&["extract", "--v", "0.9", "--g2", "0.0", "--R", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = homsim(&[
        "analyze",
        "--g2-hist",
        missing.to_str().unwrap(),
        "--hom-hist",
        missing.to_str().unwrap(),
        "--tau",
        "12.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope.csv"));
}

#[test]
fn malformed_histogram_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    write(&bad, "time_ns,counts\n0.0,1\n0.1,x\n");
    let out = homsim(&[
        "analyze",
        "--g2-hist",
        bad.to_str().unwrap(),
        "--hom-hist",
        bad.to_str().unwrap(),
        "--tau",
        "12.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn failing_oracle_exits_3() {
    // a budget too small for the drawn grids makes every instance error out
    let out = homsim(&[
        "oracle",
        "--instances",
        "5",
        "--max-bins",
        "8",
        "--budget-bins",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn config_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    write(
        &cfg,
        r#"{"format": "json", "sweep": {"m_s": 0.8, "points": 3, "eta_max": 0.2}}"#,
    );
    let cfg = cfg.to_str().unwrap();

    let rows = json(&homsim(&["--config", cfg, "sweep"]));
    assert_eq!(rows.as_array().unwrap().len(), 3);
    assert_eq!(rows[0]["v_hom"].as_f64().unwrap(), 0.8);

    let rows = json(&homsim(&[
        "--config", cfg, "sweep", "--m-s", "0.95", "--points", "2",
    ]));
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[0]["v_hom"].as_f64().unwrap(), 0.95);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    write(&cfg, r#"{"sweep": {"m_s": 0.8, "typo": 1}}"#);
    let out = homsim(&["--config", cfg.to_str().unwrap(), "sweep"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("typo"));
}

#[test]
fn model_writes_density_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("trion");
    let out = homsim(&[
        "--out",
        out_dir.to_str().unwrap(),
        "model",
        "--model",
        "trion",
        "--n-bins",
        "64",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["xi.json", "trace.csv", "model.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("model.json")).unwrap())
            .unwrap();
    let purity = summary["trace_purity"].as_f64().unwrap();
    assert!((purity - 1.0).abs() < 1e-6, "{summary}");

    // self-overlap of the written file equals its purity
    let xi = out_dir.join("xi.json");
    let ov = json(&homsim(&["overlap", "--a", xi.to_str().unwrap()]));
    assert!((ov["overlap"].as_f64().unwrap() - purity).abs() < 1e-12);
}

#[test]
fn exciton_model_has_beats() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(&[
        "--out",
        dir.path().to_str().unwrap(),
        "model",
        "--model",
        "exciton",
        "--n-bins",
        "256",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let intensity: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    // delayed rise, then beats: an interior dip well below the envelope
    assert!(intensity[0] < 1e-2 * peak);
    let dips = intensity
        .windows(3)
        .filter(|w| w[1] < w[0] && w[1] < w[2] && w[1] < 0.05 * peak)
        .count();
    assert!(dips >= 1);
}

#[test]
fn fit_with_fixed_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    // exact points of the distinguishable model at m_s = 0.9
    let mut text = String::from("g2,g2_sigma,v,v_sigma\n");
    for g2 in [0.0, 0.05, 0.1, 0.2] {
        let v = (1.0 + 0.9) * (1.0 - g2) - 1.0;
        text.push_str(&format!("{g2},0,{v},0.01\n"));
    }
    write(&data, &text);
    let path = data.to_str().unwrap();

    let r = json(&homsim(&["fit", "--data", path, "--model", "fixed:0"]));
    assert!((r["m_s"].as_f64().unwrap() - 0.9).abs() < 1e-9, "{r}");

    let b = json(&homsim(&["fit", "--data", path, "--bounds"]));
    assert!(b["upper"]["m_s"].as_f64().unwrap() > b["lower"]["m_s"].as_f64().unwrap());

    let out = homsim(&["fit", "--data", path, "--model", "fixed:2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_goes_to_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(&[
        "--out",
        dir.path().to_str().unwrap(),
        "--format",
        "csv",
        "slope",
        "--m-s",
        "0.9",
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("slope.csv")).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",slope"), "{text}");
}
