use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bracketlearn"));
    c.env_remove("BRACKETLEARN_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// A fast synthetic configuration for exercising the plumbing.
fn quick_config(dir: &Path) -> String {
    let cfg = serde_json::json!({
        "feature_map": "conic",
        "split": { "train_fraction": 0.25, "validation_fraction": 0.25, "seed": 0 },
        "train": { "epochs": 15 },
        "bracketing": { "xi_grid": [0.0, 2.0, 6.0, 12.0, 24.0], "constraint_surrogate": "squared_hinge" },
        "alt_min": { "max_rounds": 2 },
        "sum_relax_costs": [0.0, 0.2, 0.4]
    });
    let p = dir.join("quick.json");
    std::fs::write(&p, cfg.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn synth_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(run(&["synth", "--seed", "5", "--out", a.to_str().unwrap()]).status.success());
    assert!(run(&["synth", "--seed", "5", "--out", b.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 2501);
    assert_eq!(text.lines().next().unwrap(), "x,y,cloud_label");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn seed_env_overrides_default() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let out = bin().env("BRACKETLEARN_SEED", "5").args(["synth", "--n", "50", "--out", a.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    assert!(run(&["synth", "--n", "50", "--seed", "5", "--out", b.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(run(&["synth", "--n", "0", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--suite", "nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["run", "--method", "magic", "--data", "x", "--target-acc", "0.9", "--out", "y"]).status.code(), Some(2));
    assert_eq!(run(&["synth"]).status.code(), Some(2));
}

#[test]
fn run_bracketing_then_raster() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(run(&["synth", "--n", "4000", "--seed", "1", "--out", data.to_str().unwrap()]).status.success());
    let cfg = quick_config(dir.path());
    let (report, bundle) = (dir.path().join("r.json"), dir.path().join("b.json"));
    let out = run(&[
        "--jobs", "2", "run", "--method", "bracketing", "--data", data.to_str().unwrap(), "--target-acc", "0.98",
        "--config", &cfg, "--out", report.to_str().unwrap(), "--bundle", bundle.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&report);
    for key in ["method", "target_accuracy", "achieved_accuracy", "usage", "rol", "leakage_below", "leakage_above", "wall_time_seconds", "config_digest"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["method"], "bracketing");
    let usage = r["usage"].as_f64().unwrap();
    if let Some(rol) = r["rol"].as_f64() {
        assert!((rol * usage - 1.0).abs() < 1e-9);
    } else {
        assert_eq!(r["rol"], "inf");
    }

    let raster = dir.path().join("raster.csv");
    let out = run(&["raster", "--model-bundle", bundle.to_str().unwrap(), "--grid", "200", "--out", raster.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&raster).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,defer,local,cloud"));
    let cells: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(cells.len(), 200 * 200);
    let deferred = cells.iter().filter(|c| c[2] == "1").count() as f64 / cells.len() as f64;
    // The data are uniform on the raster's square, so the deferred area tracks usage.
    assert!((deferred - usage).abs() <= 0.02, "deferred {deferred} vs usage {usage}");
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(run(&["synth", "--n", "2000", "--seed", "2", "--out", data.to_str().unwrap()]).status.success());
    let cfg = quick_config(dir.path());
    let mut reports = Vec::new();
    for (i, jobs) in ["1", "3"].iter().enumerate() {
        let p = dir.path().join(format!("r{i}.json"));
        let out = run(&["--jobs", jobs, "run", "--method", "local-thresh", "--data", data.to_str().unwrap(), "--target-acc", "0.97", "--config", &cfg, "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
        let mut r = read_json(&p);
        r["wall_time_seconds"] = Value::Null;
        reports.push(r);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn alt_min_sweep_writes_sub_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(run(&["synth", "--n", "1500", "--seed", "3", "--out", data.to_str().unwrap()]).status.success());
    let cfg = quick_config(dir.path());
    let (report, sweep) = (dir.path().join("r.json"), dir.path().join("s.json"));
    let out = run(&[
        "run", "--method", "alt-min", "--data", data.to_str().unwrap(), "--target-acc", "0.95", "--config", &cfg,
        "--out", report.to_str().unwrap(), "--sweep-out", sweep.to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0) | Some(3)));
    let subs = read_json(&sweep);
    assert_eq!(subs.as_array().unwrap().len(), 25);
    assert!(subs.as_array().unwrap().iter().all(|s| s["method"] == "alt-min"));
}

#[test]
fn certified_run_below_target_exits_3_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(run(&["synth", "--n", "4000", "--seed", "4", "--out", data.to_str().unwrap()]).status.success());
    let cfg = quick_config(dir.path());
    let report = dir.path().join("r.json");
    let out = run(&[
        "run", "--method", "bracketing", "--data", data.to_str().unwrap(), "--target-acc", "0.9999", "--config", &cfg,
        "--out", report.to_str().unwrap(), "--certify", "--zeta", "0.4", "--delta", "0.1",
    ]);
    let r = read_json(&report);
    assert!(r["selection"]["slack"].as_f64().unwrap() > 0.0);
    if r["attained"] == false {
        assert_eq!(out.status.code(), Some(3));
    } else {
        assert_eq!(out.status.code(), Some(0));
    }
    // Certification applies to bracketing only.
    let out = run(&["run", "--method", "sum-relax", "--data", data.to_str().unwrap(), "--target-acc", "0.9", "--out", report.to_str().unwrap(), "--certify"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn raster_rejects_a_non_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.json");
    std::fs::write(&bogus, r#"{"something": 1}"#).unwrap();
    let out = run(&["raster", "--model-bundle", bogus.to_str().unwrap(), "--out", dir.path().join("r.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_suites_report_json() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["decoupling", "gating", "constructions"] {
        let p = dir.path().join(format!("{suite}.json"));
        let out = run(&["verify", "--suite", suite, "--seed", "11", "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{suite}: {}", String::from_utf8_lossy(&out.stderr));
        let r = read_json(&p);
        assert_eq!(r["suite"], suite);
        assert_eq!(r["passed"], true);
        assert_eq!(r["cases_passed"], r["cases_total"]);
    }
    let p = dir.path().join("d.json");
    assert!(run(&["verify", "--suite", "decoupling", "--out", p.to_str().unwrap()]).status.success());
    assert_eq!(read_json(&p)["cases_total"], 200);
}
