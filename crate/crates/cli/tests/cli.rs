use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn posfeed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posfeed")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    posfeed(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn list_models_names_builtins() {
    let out = posfeed(&["list-models"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["S1", "S2", "S3"] {
        assert!(text.contains(name), "{text}");
    }
    assert!(text.contains("beta_m 0.2"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = p(&out);
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["nonsense"]), 2);
    assert_eq!(code(&["simulate", "--model", "S9", "--u", "1", "--x0", "1,1", "--t", "0:1", "--out", o]), 2);
    assert_eq!(code(&["simulate", "--model", "S3", "--u", "1", "--x0", "1,-1,1", "--t", "0:1", "--out", o]), 2);
    assert_eq!(code(&["simulate", "--model", "S3", "--u", "1", "--x0", "1,1", "--t", "0:1", "--out", o]), 2);
    assert_eq!(code(&["simulate", "--model", "S3", "--u", "1", "--gamma", "2", "--x0", "1,1,1", "--t", "0:1", "--out", o]), 2);
    assert_eq!(code(&["simulate", "--model", "S3", "--x0", "1,1,1", "--t", "0:1", "--out", o]), 2);
    assert_eq!(code(&["simulate", "--model", "S3", "--u", "1", "--x0", "1,1,1", "--t", "2:1", "--out", o]), 2);
    assert_eq!(code(&["verify", "--model", "S3", "--beta", "1.0", "--out", o]), 2);
    assert_eq!(code(&["verify", "--model", "S3", "--box", "0:1", "--box", "0:1", "--out", o]), 2);
    assert_eq!(code(&["equilibria", "--model", "S1", "--gamma", "-1", "--out", o]), 2);
    assert_eq!(code(&["reproduce", "--figure", "9", "--outdir", p(dir.path())]), 2);
    assert!(!out.exists());
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn failing_verification_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.model");
    std::fs::write(&model, "system bad\ndim 2\nf1 = -1 + x1^2 - x2\nf2 = x1 - x2\nc = [-1, 1]\npsi = x1 - 1\n").unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(code(&["verify", "--model", p(&model), "--out", p(&out)]), 1);
    let r = read_json(&out);
    assert_eq!(r["beta_m"], "infeasible");
    let failed = r["checks"].as_array().unwrap().iter().filter(|c| c["verdict"] == "fail").count();
    assert!(failed >= 2, "{r}");
}

#[test]
fn verify_s3_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(code(&["verify", "--model", "S3", "--seed", "7", "--beta", "2", "--out", p(&out)]), 0);
    let r = read_json(&out);
    assert_eq!(r["model"], "S3");
    assert_eq!(r["domain"]["seed"], 7);
    assert!((r["beta_m"].as_f64().unwrap() - 1.7125047).abs() < 1e-6);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["verdict"] == "pass"));
    // model files are accepted in place of builtin names
    let model = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/models/s3.model");
    let out2 = dir.path().join("r2.json");
    assert_eq!(code(&["verify", "--model", model, "--seed", "7", "--beta", "2", "--out", p(&out2)]), 0);
    let r2 = read_json(&out2);
    assert_eq!(r["checks"], r2["checks"]);
}

#[test]
fn equilibria_s1_quarter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.json");
    assert_eq!(code(&["equilibria", "--model", "S1", "--u", "0.25", "--out", p(&out)]), 0);
    let r = read_json(&out);
    let eqs = r["equilibria"].as_array().unwrap();
    assert_eq!(eqs.len(), 3);
    let stable = eqs.iter().filter(|e| e["stability"]["verdict"] == "stable").count();
    assert_eq!(stable, 2);

    assert_eq!(code(&["equilibria", "--model", "S1", "--gamma", "0.25", "--out", p(&out)]), 0);
    let r = read_json(&out);
    let x = &r["equilibria"][0]["x_star"];
    assert!((x[0].as_f64().unwrap() - 1.0).abs() < 1e-10 && (x[1].as_f64().unwrap() - 4.0).abs() < 1e-10);
}

#[test]
fn simulate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let args = ["simulate", "--model", "S2", "--switch", "1:2:4", "--x0", "0.5,0.5,0.5", "--t", "0:8", "--dt-out", "0.5", "--out", p(&out)];
    assert_eq!(code(&args), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,x2,x3,u");
    assert_eq!(lines.len(), 1 + 17);
    assert!(lines[1].starts_with("0.0,0.5,0.5,0.5,1.0"));
    assert!(!text.contains('\r'));
}

#[test]
fn reproduce_figure_five_switches_input() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["reproduce", "--figure", "5", "--outdir", p(dir.path())]), 0);
    let text = std::fs::read_to_string(dir.path().join("fig5.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    for r in &rows {
        if r[0] < 20.0 {
            assert_eq!(r[4], 1.0);
        }
    }
    let last = rows.last().unwrap();
    assert_eq!(last[0], 200.0);
    // the feedback drives the input to the value that holds the set point
    assert!((last[4] - 1.0).abs() < 1e-3, "{last:?}");
    let manifest = read_json(&dir.path().join("fig5.json"));
    assert_eq!(manifest["metadata"]["scenario"]["t_switch"], 20.0);
}

#[test]
fn reproduce_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(code(&["reproduce", "--figure", "3", "--outdir", p(d.path())]), 0);
    }
    for f in ["fig3.csv", "fig3.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn lyapunov_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.json");
    let args = ["lyapunov", "--model", "S3", "--gamma", "1.73", "--x0", "1,1,1", "--transient", "50", "--measure", "100", "--out", p(&out)];
    assert_eq!(code(&args), 0);
    let lle = read_json(&out)["payload"]["lyapunov_exponent"].as_f64().unwrap();
    // a stable equilibrium contracts
    assert!(lle < 0.0, "{lle}");
}

#[test]
fn reproduce_figure_one_is_bistable() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["reproduce", "--figure", "1", "--outdir", p(dir.path())]), 0);
    let manifest = read_json(&dir.path().join("fig1.json"));
    let runs = manifest["payload"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 144);
    let mut limits: Vec<Vec<f64>> = Vec::new();
    for r in runs {
        let x: Vec<f64> = r["final_state"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        if !limits.iter().any(|l| l.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-3)) {
            limits.push(x);
        }
        assert!(dir.path().join(r["file"].as_str().unwrap()).exists());
    }
    assert_eq!(limits.len(), 2, "{limits:?}");
}
