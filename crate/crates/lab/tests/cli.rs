use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn lab(args: &[&str], config: &Value, out: &Path) -> Output {
    let dir = out.parent().expect("output has a parent");
    let cfg_path = dir.join(format!("{}.json", out.file_name().unwrap().to_string_lossy()));
    std::fs::write(&cfg_path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(args)
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(out)
        .output()
        .expect("lab runs")
}

fn stdout_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.lines().last().expect("a status line")).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn two_solitons() -> Value {
    json!([{ "ell": -0.5 }, { "ell": 0.5 }])
}

#[test]
fn minimal_config_is_completed_with_defaults() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("min");
    let o = lab(&["evolve"], &json!({ "grid": {}, "solitons": [{ "ell": 0 }] }), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let status = stdout_json(&o);
    assert_eq!(status["subcommand"], "evolve");
    let m = read_json(&out.join("manifest.json"));
    let cfg = &m["config"];
    assert_eq!(cfg["grid"]["n_x1"], 1200);
    assert_eq!(cfg["grid"]["rho_max"], 80.0);
    assert_eq!(cfg["time"]["dt_cfl"], 0.45);
    assert_eq!(cfg["solitons"][0]["lambda"], 1.0);
    assert_eq!(cfg["chi"]["sigma"], 0.05);
    assert_eq!(cfg["shoot"]["S"], 40.0);
    assert_eq!(cfg["seed"], 0);
    assert_eq!(m["outputs_sha256"], status["outputs_sha256"]);
    let names: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    for f in ["series.csv", "final_state.bin", "summary.json"] {
        assert!(names.contains(&f), "{names:?}");
    }
    let summary = read_json(&out.join("summary.json"));
    assert!(summary["max_deviation_E"].as_f64().unwrap() < 1e-3);
}

#[test]
fn invalid_configs_name_the_offending_key() {
    let tmp = TempDir::new().unwrap();
    let o = lab(&["evolve"], &json!({ "solitons": [{ "ell": 1.0 }] }), &tmp.path().join("a"));
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "config");
    assert_eq!(e["error"]["detail"]["key"], "solitons[0].ell");
    assert!(e["error"]["detail"]["message"].as_str().unwrap().contains("speed must lie in (−1,1)"));

    let o = lab(&["evolve"], &json!({ "solitons": two_solitons(), "chi": { "sigma": 0.1 } }), &tmp.path().join("b"));
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["detail"]["key"], "chi.sigma");
    assert!(e["error"]["detail"]["message"].as_str().unwrap().contains("ChiProfile invariant"));

    let o = lab(&["evolve"], &json!({ "grid": { "nx1": 10 } }), &tmp.path().join("c"));
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["detail"]["key"], "grid.nx1");
    assert!(e["error"]["detail"]["message"].as_str().unwrap().contains("unknown field"));

    let o = lab(&["evolve"], &json!({ "shoot": { "S": 10.0, "T0": 20.0 } }), &tmp.path().join("d"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["detail"]["key"], "shoot.T0");
}

#[test]
fn runtime_errors_are_reported_as_json() {
    let tmp = TempDir::new().unwrap();
    let o = lab(&["interactions"], &json!({ "solitons": [{ "ell": 0.0 }] }), &tmp.path().join("one"));
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "runtime");
    assert!(e["error"]["detail"]["message"].as_str().unwrap().contains("at least two solitons"));
}

#[test]
fn reruns_reproduce_every_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({ "solitons": two_solitons() });
    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    let (oa, ob) = (lab(&["interactions"], &cfg, &a), lab(&["interactions"], &cfg, &b));
    assert!(oa.status.success() && ob.status.success());
    assert_eq!(stdout_json(&oa)["outputs_sha256"], stdout_json(&ob)["outputs_sha256"]);
    for f in ["pairs.csv", "source.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let s = read_json(&a.join("summary.json"));
    assert_eq!(s["pairs"].as_array().unwrap().len(), 3);
    assert!((s["rw_l2_fit"]["slope"].as_f64().unwrap() + 3.0).abs() < 0.2);
}

#[test]
fn shoot_with_scan_writes_the_landscape() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("shoot");
    let cfg = json!({
        "grid": { "x1_min": -40.0, "x1_max": 40.0, "rho_max": 30.0, "n_x1": 400, "n_rho": 150 },
        "solitons": [{ "ell": 0.0 }],
        "shoot": { "S": 20.0, "T0": 15.0, "search": { "budget": 30 }, "scan": { "points": 5 } }
    });
    let o = lab(&["shoot", "--scan"], &cfg, &out);
    assert!(matches!(o.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("landscape.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("xi,exit_time,exit_reason"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        let t: f64 = f[1].parse().unwrap();
        assert!((15.0..=20.0).contains(&t));
    }
    let s = read_json(&out.join("summary.json"));
    assert!(s["xi_star"].is_array() && s["exit_time"].is_number());
    assert_eq!(s["landscape"]["points"], 5);
    assert!(out.join("shots.csv").exists() && out.join("best_series.csv").exists());
}

#[test]
fn spectral_report_and_verify_table() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("spectral");
    let cfg = json!({ "spectral": { "ells": [0.3], "coercivity_ells": [0.0] } });
    let o = lab(&["spectral"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&out.join("summary.json"));
    assert!(s["lambda0"].as_f64().unwrap() > 0.0);
    let res = s["residuals"]["ell=0.3"].as_object().unwrap();
    assert!(!res.is_empty() && res.values().all(|v| v.as_f64().unwrap() < 1e-5));
    assert!(s["mu"].as_object().unwrap().len() >= 4);

    let out = tmp.path().join("verify");
    let o = lab(&["verify"], &json!({}), &out);
    // The (4/3, 4/3) pair slope over [20, 80] misses its tolerance, so the table reports a failure.
    assert_eq!(o.status.code(), Some(3));
    let table = String::from_utf8_lossy(&o.stdout);
    let identity_rows: Vec<&str> = table.lines().filter(|l| l.starts_with("identity at")).collect();
    assert!(identity_rows.len() >= 24, "{}", identity_rows.len());
    assert!(identity_rows.iter().all(|l| l.trim_end().ends_with("PASS")), "{table}");
    let failing: Vec<&str> = table.lines().filter(|l| l.trim_end().ends_with("FAIL")).collect();
    assert_eq!(failing.len(), 1, "{failing:?}");
    assert!(failing[0].contains("(1.3333, 1.3333)"));
    assert!(out.join("verify.csv").exists());
}
