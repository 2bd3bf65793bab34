use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(sub: &str, config: &str, dir: &Path, threads: Option<&str>) -> Output {
    let cfg = dir.join(format!("{sub}.json"));
    std::fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kuramoto-damping"));
    cmd.args([sub, "--config"]).arg(&cfg).arg("--out").arg(dir.join("out"));
    if let Some(t) = threads {
        cmd.env("KD_THREADS", t);
    }
    cmd.output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stability_config(k: f64) -> String {
    format!(
        r#"{{"formatVersion": 1, "distribution": {{"family": "bicauchy", "delta": 1.0, "separation": 2.0}}, "K": {k}}}"#
    )
}

#[test]
fn stability_verdicts_either_side_of_threshold() {
    let dir = TempDir::new().unwrap();
    let out = run("stability", &stability_config(3.9), dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("out/stability.json"));
    assert_eq!(report["verdict"], "Stable");
    assert_eq!(report["windingNumber"], 0);
    assert_eq!(report["formatVersion"], 1);
    assert_eq!(report["config"]["K"], 3.9);

    let dir = TempDir::new().unwrap();
    let out = run("stability", &stability_config(4.1), dir.path(), None);
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&dir.path().join("out/stability.json"));
    assert_eq!(report["verdict"], "Unstable");
    assert!(report["windingNumber"].as_u64().unwrap() >= 1);
    assert!(!report["unstableRoots"].as_array().unwrap().is_empty());
}

#[test]
fn unknown_key_exits_2_without_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"formatVersion": 1, "distribution": {"family": "cauchy", "delta": 1.0}, "K": 1.0, "Kc": 2.0}"#;
    let out = run("stability", cfg, dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn invalid_thread_cap_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let out = run("stability", &stability_config(3.9), dir.path(), Some("0"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_3_with_diagnostic() {
    // A stable coupling has no growing mode to build a witness from.
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"formatVersion": 1, "distribution": {"family": "gaussian", "sigma": 1.0}, "K": 1.0}"#;
    let out = run("witness", cfg, dir.path(), None);
    assert_eq!(out.status.code(), Some(3));
    let diag = read_json(&dir.path().join("out/error.json"));
    assert_eq!(diag["error"]["kind"], "NoUnstableRoot");
    assert_eq!(diag["config"]["K"], 1.0);
}

#[test]
fn compare_rejects_mismatched_coupling() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{
      "formatVersion": 1,
      "continuum": {"distribution": {"family": "gaussian", "sigma": 1.0}, "K": 1.0, "epsilon": 0.01, "kMax": 4,
                    "gridNodes": 64, "dt": 0.01, "T": 1.0, "outputEvery": 0.1,
                    "initialPerturbation": {"modes": [{"k": 1, "profile": {"shape": "constant"}}]}},
      "finiteN": {"distribution": {"family": "gaussian", "sigma": 1.0}, "N": 100, "K": 1.2, "epsilon": 0.01,
                  "sampling": "quantile", "dt": 0.01, "T": 1.0,
                  "initialPerturbation": {"modes": [{"k": 1, "profile": {"shape": "constant"}}]}}
    }"#;
    let out = run("compare", cfg, dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let finite = r#"{"formatVersion": 1, "distribution": {"family": "gaussian", "sigma": 1.0}, "N": 20000,
        "K": 1.5, "epsilon": 0.05, "sampling": "seeded", "seed": 42, "dt": 0.01, "T": 2.0, "outputEvery": 0.1}"#;
    let nonlinear = r#"{"formatVersion": 1, "distribution": {"family": "gaussian", "sigma": 1.0}, "K": 1.0,
        "epsilon": 0.05, "kMax": 6, "gridNodes": 256, "dt": 0.01, "T": 3.0, "outputEvery": 0.1,
        "initialPerturbation": {"modes": [{"k": 1, "profile": {"shape": "gaussian", "width": 0.7}}]}}"#;
    for (sub, cfg, files) in [
        ("finite-n", finite, vec!["finite_n.csv", "config.json"]),
        ("nonlinear", nonlinear, vec!["R.csv", "diagnostics.csv", "scattering.json"]),
    ] {
        let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
        assert_eq!(run(sub, cfg, a.path(), Some("1")).status.code(), Some(0));
        assert_eq!(run(sub, cfg, b.path(), Some("4")).status.code(), Some(0));
        for f in files {
            let x = std::fs::read(a.path().join("out").join(f)).unwrap();
            let y = std::fs::read(b.path().join("out").join(f)).unwrap();
            assert!(x == y, "{sub}/{f} differs");
        }
    }
}

#[test]
fn linear_csv_has_header_and_full_precision() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"formatVersion": 1, "distribution": {"family": "cauchy", "delta": 1.0}, "K": 1.0,
        "input": {"kind": "powerLaw", "exponent": 4.0}, "dt": 0.05, "T": 40.0}"#;
    let out = run("linear", cfg, dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/linear.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,Re(R),Im(R),abs(R),(1+t)^4*abs(R)"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, 1.0, 0.0, 1.0, 1.0]);
    assert_eq!(csv.lines().count(), 802);
    let fit = read_json(&dir.path().join("out/decay_fit.json"));
    assert!(fit["decayFit"]["exponent"].as_f64().unwrap() > 3.5);
}

#[test]
fn samples_input_resolves_relative_to_config() {
    let dir = TempDir::new().unwrap();
    let mut samples = String::from("re,im\n");
    for j in 0..=200 {
        let t = j as f64 * 0.05;
        samples.push_str(&format!("{},0\n", (1.0 + t).powi(-3)));
    }
    std::fs::write(dir.path().join("f.csv"), samples).unwrap();
    let cfg = r#"{"formatVersion": 1, "distribution": {"family": "cauchy", "delta": 1.0}, "K": 0.0,
        "input": {"kind": "samples", "path": "f.csv"}, "dt": 0.05, "T": 10.0}"#;
    let out = run("linear", cfg, dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // Without coupling R = F at every sample.
    let csv = std::fs::read_to_string(dir.path().join("out/linear.csv")).unwrap();
    for (j, line) in csv.lines().skip(1).enumerate() {
        let re: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(re, (1.0 + j as f64 * 0.05).powi(-3));
    }
}

#[test]
fn kc_scan_rows_follow_range() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"formatVersion": 1, "distribution": {"family": "bicauchy", "delta": 1.0, "separation": 0.0},
        "parameter": "separation", "start": 0.0, "stop": 3.0, "count": 4}"#;
    let out = run("kc-scan", cfg, dir.path(), None);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("out/kc_scan.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][0], "0");
    assert!((rows[0][1].parse::<f64>().unwrap() - 2.0).abs() < 1e-9);
    // Separation 1 is the degenerate point where the side zeros merge at 0.
    assert_eq!(rows[1][2], "0");
    for row in &rows[1..] {
        assert!((row[1].parse::<f64>().unwrap() - 4.0).abs() < 1e-9);
    }
    for row in &rows[2..] {
        assert_eq!(row[2].split(';').count(), 2);
    }
}
