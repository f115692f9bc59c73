use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn routh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_routh")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn temp(name: &str, contents: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("routh-cli-{}-{name}", std::process::id()));
    std::fs::write(&p, contents).unwrap();
    p
}

/// Header and numeric rows of CSV output.
fn csv(o: &Output) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn list_systems_names_every_built_in() {
    let o = routh(&["list-systems"]);
    assert_eq!(code(&o), 0);
    let names: Vec<String> = json(&o).as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap().to_string()).collect();
    assert_eq!(names, ["toy", "rigid-body", "heavy-top", "tippe-top", "pp-wave"]);
}

#[test]
fn rigid_body_csv_layout_and_stability() {
    let args = ["simulate", "--system", "rigid-body", "--mu", "0,0,2", "--t1", "0.05"];
    let a = routh(&args);
    assert_eq!(code(&a), 0);
    let (header, rows) = csv(&a);
    assert!(header.len() >= 7);
    assert_eq!(&header[..7], ["t", "phi", "theta", "psi", "phi_dot", "theta_dot", "psi_dot"]);
    assert!(header.contains(&"E_L".to_string()) && header.contains(&"J_L_3".to_string()));
    assert_eq!(rows.len(), 51);
    let j3 = header.iter().position(|h| h == "J_L_3").unwrap();
    assert!((rows[0][j3] - 2.0).abs() < 1e-8);
    let first = String::from_utf8(a.stdout.clone()).unwrap();
    let field = first.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    assert_eq!(field.split('e').next().unwrap().replace(['.', '-'], "").len(), 17, "{field}");
    assert_eq!(routh(&args).stdout, a.stdout, "output must be bit-stable");
}

#[test]
fn heavy_top_momentum_column_is_constant() {
    let o = routh(&["simulate", "--system", "heavy-top", "--t1", "2"]);
    assert_eq!(code(&o), 0);
    let (header, rows) = csv(&o);
    let j = header.iter().position(|h| h == "J_L").unwrap();
    let drift = rows.iter().map(|r| (r[j] - rows[0][j]).abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-7, "drift {drift}");
}

#[test]
fn json_trajectory_and_out_file() {
    let path = std::env::temp_dir().join(format!("routh-cli-{}-traj.json", std::process::id()));
    let o = routh(&["simulate", "--system", "toy", "--t1", "0.01", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["columns"][0], "t");
    assert_eq!(v["rows"].as_array().unwrap().len(), 11);
}

#[test]
fn run_file_sets_system_parameters_and_initial_state() {
    let cfg = temp(
        "run.cfg",
        "# heavy top without field\nsystem = heavy-top\nparams.OmegaB = 0\ninitial.q = 0.1, 0.8, 0.2\ninitial.psi_dot = 3\nrun.t1 = 0.01\n",
    );
    let o = routh(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = csv(&o);
    assert_eq!(&rows[0][1..4], [0.1, 0.8, 0.2]);
    assert_eq!(rows[0][6], 3.0);
    assert_eq!(rows.len(), 11);
}

#[test]
fn configuration_errors_exit_2() {
    assert_eq!(code(&routh(&["simulate", "--system", "double-pendulum"])), 2);
    assert_eq!(code(&routh(&["simulate", "--system", "toy", "--dt", "0"])), 2);
    assert_eq!(code(&routh(&["reduce", "--system", "toy", "--mu", "1,2"])), 2);
    let bad = temp("bad.cfg", "system = toy\nrun.horizon = 3\n");
    assert_eq!(code(&routh(&["simulate", "--config", bad.to_str().unwrap()])), 2);
    let unknown = temp("unknown.cfg", "system = toy\nparams.I1 = 3\n");
    assert_eq!(code(&routh(&["simulate", "--config", unknown.to_str().unwrap()])), 2);
    assert_eq!(code(&routh(&["simulate"])), 2);
}

#[test]
fn integration_failure_exits_3_and_names_the_time() {
    let cfg = temp("pole.cfg", "system = heavy-top\ninitial.theta = 1e-9\n");
    let o = routh(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("t = 0"));
}

#[test]
fn unsupported_momentum_exits_4() {
    assert_eq!(code(&routh(&["reduce", "--system", "rigid-body", "--mu", "0.5,0,2", "--t1", "0.1"])), 4);
}

#[test]
fn rigid_body_reduce_report() {
    let o = routh(&["reduce", "--system", "rigid-body"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["g_regular"], true);
    assert!(r["sup_error"].as_f64().unwrap() <= 1e-5);
    assert!(r["momentum_drift_full"].as_f64().unwrap() <= 1e-6);
    assert!(r["momentum_drift_reduced"].as_f64().unwrap() <= 1e-6);
    assert!(r["presymplectic_residual_sup"].as_f64().unwrap() <= 1e-5);
    assert!(r["runtime_full_s"].as_f64().unwrap() > 0.0 && r["runtime_reduced_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn toy_reduce_routes_to_the_pointwise_check() {
    let o = routh(&["reduce", "--system", "toy", "--t1", "1"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["g_regular"], false);
    assert!(r["routes"].as_array().unwrap().contains(&Value::from("pointwise-constraint-check")));
    let pc = &r["pointwise_check"];
    assert_eq!(pc["consistent"], true);
    assert_eq!(pc["on_level"]["solvable"], pc["samples"]);
    assert_eq!(pc["off_level"]["unsolvable"], pc["samples"]);
}

#[test]
fn pp_wave_reduce_takes_the_linear_path() {
    let o = routh(&["reduce", "--system", "pp-wave", "--t1", "1"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["g_regular"], false);
    assert!(r["routes"].as_array().unwrap().contains(&Value::from("linear-constraint")));
    assert!(r["linear_constraint"]["sup_error_vs_full"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn compare_and_reconstruct_agree_with_the_full_run() {
    let o = routh(&["compare", "--system", "heavy-top", "--t1", "2"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert!(r["sup_error"].as_f64().unwrap() <= 1e-5);
    assert!(r["per_coordinate"]["phi"].as_f64().unwrap() <= 1e-5);

    let rec = routh(&["reconstruct", "--system", "heavy-top", "--t1", "0.5"]);
    let full = routh(&["simulate", "--system", "heavy-top", "--t1", "0.5"]);
    let ((hr, rr), (_, rf)) = (csv(&rec), csv(&full));
    assert_eq!(&hr[..4], ["t", "phi", "theta", "psi"]);
    let err = rr.iter().zip(&rf).map(|(a, b)| (1..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    assert!(err <= 1e-5, "err {err}");
}

#[test]
fn check_passes_on_built_ins_and_is_stable() {
    for name in ["toy", "rigid-body", "heavy-top", "tippe-top", "pp-wave"] {
        let o = routh(&["check", "--system", name]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stdout));
        assert_eq!(json(&o)["pass"], true);
    }
    assert_eq!(routh(&["check", "--system", "heavy-top"]).stdout, routh(&["check", "--system", "heavy-top"]).stdout);
}

#[test]
fn broken_symmetry_fails_the_invariance_check() {
    let cfg = temp("tilt.cfg", "system = heavy-top\nparams.tilt = 0.2\n");
    let o = routh(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let r = json(&o);
    assert_eq!(r["system"], "heavy-top");
    let inv = r["invariants"].as_array().unwrap().iter().find(|e| e["name"] == "invariance").unwrap();
    assert_eq!(inv["pass"], false);
    assert!(inv["value"].as_f64().unwrap() > 1e-8);
}
