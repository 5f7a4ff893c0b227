use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn efq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efq"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("efq runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = efq(dir, args);
    assert!(
        out.status.success(),
        "efq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Rows of a hash-prefixed CSV artifact, header first.
fn read_csv(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let (first, rest) = text.split_once('\n').unwrap();
    let hash = first.strip_prefix("# config_hash=").expect("hash line").to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(rest.as_bytes());
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (hash, rows)
}

const SMALL: &str = r#"{
  "schema": "efq-config/1",
  "bits": [6, 8],
  "lambdas": [1, 2],
  "grid_points": 2048,
  "sim": {"length": 50000, "seeds": 2, "bits": [8], "lambdas": [1], "trace_length": 20}
}"#;

#[test]
fn constant_plant_distortion_matches_closed_form() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "k.json",
        r#"{"plant": {"num": [2.0], "den": [1.0], "sample_period": 1.0}, "bits": [2, 3, 5], "lambdas": [1, 2, 3]}"#,
    );
    ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "--out", "o", "--quiet", "design"]);
    let design = read_json(&tmp.path().join("o/design.json"));
    let cells = design["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 9);
    for c in cells {
        let nu = c["nu"].as_f64().unwrap();
        let lambda = c["lambda"].as_u64().unwrap() as i32;
        let d = c["distortion"].as_f64().unwrap();
        let expected = 4.0 / (nu.powi(lambda) - 1.0);
        assert!((d - expected).abs() <= 1e-9 * expected, "{c}");
        assert!(c["r_log_mean"].as_f64().unwrap().abs() < 1e-9);
        assert!(c["feasibility_margin"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let cfg = cfg.to_str().unwrap();
    let files = [
        "design.json",
        "design.csv",
        "design_r_opt.csv",
        "rd_curve.csv",
        "fit.json",
        "fit_report.csv",
        "simulate.json",
        "simulate.csv",
        "trace_b8_l1.csv",
    ];
    for out in ["a", "b"] {
        for cmd in ["design", "rd-curve", "fit", "simulate"] {
            ok(tmp.path(), &["--config", cfg, "--out", out, "--quiet", cmd]);
        }
    }
    for f in files {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
    // Thread count does not change results.
    let out = Command::new(env!("CARGO_BIN_EXE_efq"))
        .current_dir(tmp.path())
        .env("EFQ_THREADS", "1")
        .args(["--config", cfg, "--out", "c", "--quiet", "design"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(tmp.path().join("a/design.json")).unwrap(),
        std::fs::read(tmp.path().join("c/design.json")).unwrap()
    );
}

#[test]
fn rd_curve_csv_is_lossless_and_consistent() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["--out", "o", "--quiet", "--grid", "4096", "rd-curve"]);
    let (hash, rows) = read_csv(&tmp.path().join("o/rd_curve.csv"));
    assert_eq!(hash.len(), 64);
    assert_eq!(
        rows[0],
        ["bits", "lambda", "gamma", "D_db", "D_uniform_db", "bound_db", "oversampling_residual"]
    );
    assert_eq!(rows.len(), 1 + 8 * 4);
    for row in &rows[1..] {
        let v: Vec<f64> = row.iter().map(|s| s.parse().unwrap()).collect();
        for (s, x) in row.iter().zip(&v).skip(2) {
            assert_eq!(&format!("{x:?}"), s, "not shortest round-trip form");
        }
        let (bits, lambda, d, uniform, bound, residual) = (v[0], v[1], v[3], v[4], v[5], v[6]);
        assert!(residual.abs() < 1e-6, "{row:?}");
        assert!(d <= bound + 1e-9, "{row:?}");
        if lambda == 1.0 && bits >= 4.0 {
            let gain = uniform - d;
            assert!((9.5..11.0).contains(&gain), "gain {gain} dB at b={bits}");
        }
    }
}

#[test]
fn fit_round_trip_reads_design_and_reports_loss() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let cfg = cfg.to_str().unwrap();
    ok(tmp.path(), &["--config", cfg, "--out", "o", "--quiet", "design"]);
    ok(tmp.path(), &["--config", cfg, "--out", "o", "--quiet", "fit"]);
    let design = read_json(&tmp.path().join("o/design.json"));
    let fit = read_json(&tmp.path().join("o/fit.json"));
    assert_eq!(design["config_hash"], fit["config_hash"]);
    assert_eq!(fit["method"], "qcqp");
    for (d, f) in design["cells"].as_array().unwrap().iter().zip(fit["cells"].as_array().unwrap()) {
        assert_eq!(d["bits"], f["bits"]);
        assert_eq!(d["lambda"], f["lambda"]);
        let ideal = f["ideal_mse"].as_f64().unwrap();
        assert!((ideal - d["distortion"].as_f64().unwrap()).abs() <= 1e-9 * ideal);
        assert!(f["achieved_mse"].as_f64().unwrap() >= ideal * (1.0 - 1e-9));
        assert!(f["feasible"].as_bool().unwrap());
        assert_eq!(f["filter"]["num"][0].as_f64(), Some(1.0));
        if f["lambda"] == 1 {
            assert!(f["loss_db"].as_f64().unwrap() < 0.5, "{f}");
        }
    }

    // Yule-Walker through an explicit --design path.
    let yw = write_config(
        tmp.path(),
        "yw.json",
        &SMALL.replacen("\"grid_points\"", "\"fit\": {\"method\": \"yw\"}, \"grid_points\"", 1),
    );
    let yw = yw.to_str().unwrap();
    ok(tmp.path(), &["--config", yw, "--out", "y", "--quiet", "design"]);
    ok(tmp.path(), &["--config", yw, "--out", "z", "--quiet", "fit", "--design", "y/design.json"]);
    let fit = read_json(&tmp.path().join("z/fit.json"));
    assert_eq!(fit["method"], "yw");
    assert!(fit["cells"][0]["kkt_multiplier"].is_null());
}

#[test]
fn simulate_is_seed_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let cfg = cfg.to_str().unwrap();
    for cmd in ["design", "fit", "simulate"] {
        ok(tmp.path(), &["--config", cfg, "--out", "o", "--quiet", cmd]);
    }
    let sim = read_json(&tmp.path().join("o/simulate.json"));
    assert_eq!(sim["seeds"], serde_json::json!([1, 2]));
    let cell = &sim["cells"][0];
    assert_eq!(cell["bits"], 8);
    let runs = cell["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_ne!(runs[0]["empirical_mse"], runs[1]["empirical_mse"]);
    for r in runs {
        assert!(r["loop_identity_error"].as_f64().unwrap() < 1e-10);
        assert!(r["overload_rate"].as_f64().unwrap() < 0.05);
    }

    let (_, trace) = read_csv(&tmp.path().join("o/trace_b8_l1.csv"));
    assert_eq!(trace[0], ["k", "x", "u", "v", "w", "overload"]);
    assert_eq!(trace.len(), 21);

    // A different base seed changes the draws; the same one reproduces them.
    for cmd in ["design", "fit", "simulate"] {
        ok(tmp.path(), &["--config", cfg, "--seed", "7", "--out", "s", "--quiet", cmd]);
    }
    let other = read_json(&tmp.path().join("s/simulate.json"));
    assert_eq!(other["seeds"], serde_json::json!([7, 8]));
    assert_ne!(other["cells"][0]["runs"][0]["empirical_mse"], runs[0]["empirical_mse"]);
}

#[test]
fn invalid_nu_is_rejected_with_field_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{"extra_nu": [2.0, 0.5], "loading_factor": -1}"#);
    let out = efq(tmp.path(), &["--config", cfg.to_str().unwrap(), "--out", "o", "design"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("extra_nu[1]"), "{err}");
    assert!(err.contains("loading_factor"), "{err}");
    assert!(!tmp.path().join("o/design.json").exists());
}

#[test]
fn bad_environment_and_unknown_fields_exit_one() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_efq"))
        .current_dir(tmp.path())
        .env("EFQ_THREADS", "zero")
        .args(["--out", "o", "design"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let cfg = write_config(tmp.path(), "typo.json", r#"{"bitz": [4]}"#);
    let out = efq(tmp.path(), &["--config", cfg.to_str().unwrap(), "design"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bitz"));
}

#[test]
fn artifact_from_another_config_is_refused() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "--out", "o", "--quiet", "design"]);
    let out = efq(tmp.path(), &["--out", "o", "--quiet", "fit"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration"));
    let out = efq(tmp.path(), &["--out", "o", "--quiet", "fit", "--design", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_reports_each_check() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "v.json",
        r#"{"bits": [6, 8], "lambdas": [1], "sim": {"length": 20000, "seeds": 2, "input": "white"}}"#,
    );
    let out = efq(tmp.path(), &["--config", cfg.to_str().unwrap(), "--out", "o", "verify"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    for id in 1..=10 {
        assert!(stdout.contains(&format!("[{id:>2}]")), "check {id} missing:\n{stdout}");
    }
    assert!(stdout.contains("grid convergence"));
    let report = read_json(&tmp.path().join("o/verify.json"));
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 10);
    let all_pass = checks.iter().all(|c| c["passed"] == true);
    assert_eq!(report["passed"].as_u64(), Some(checks.iter().filter(|c| c["passed"] == true).count() as u64));
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 3 }));
    let grid = checks.iter().find(|c| c["id"] == 10).unwrap();
    assert_eq!(grid["passed"], true, "{grid}");
}
