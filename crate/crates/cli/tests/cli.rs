use std::path::Path;
use std::process::{Command, Output};

fn rcbf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcbf"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn rcbf")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = rcbf(&["simulate", "--scenario", "nonlinear2d", "--smid", "on", "--T", "1", "--out", "runs/a"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("runs/a");
    let csv = std::fs::read_to_string(run.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,u1,h,V,margin_barrier,margin_clf\n"));
    assert_eq!(csv.lines().count(), 102);
    let s = json(&run.join("summary.json"));
    assert_eq!(s["scenario"]["name"], "nonlinear2d");
    assert_eq!(s["config"]["smid"]["epsilon"], 0.1);
    assert!(s["boxes"].as_array().unwrap().len() > 1);
    assert!(s["failure"].is_null());
}

#[test]
fn robot_without_identification() {
    let dir = tempfile::tempdir().unwrap();
    let out = rcbf(&["simulate", "--scenario", "planar-robot", "--smid", "off", "--T", "0.5", "--out", "r"], dir.path());
    assert!(out.status.success());
    let s = json(&dir.path().join("r/summary.json"));
    assert!(s["config"]["smid"].is_null());
    assert_eq!(s["boxes"].as_array().unwrap().len(), 1);
    let header = std::fs::read_to_string(dir.path().join("r/trajectory.csv")).unwrap();
    assert!(header.starts_with("t,x1,x2,x3,x4,u1,u2,h,psi1,V,"));
}

#[test]
fn exact_controller_uses_true_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = rcbf(&["simulate", "--scenario", "nonlinear2d", "--controller", "exact", "--T", "0.5", "--out", "e"], dir.path());
    assert!(out.status.success());
    let s = json(&dir.path().join("e/summary.json"));
    assert_eq!(s["config"]["controller"], "exact");
    let widths = s["metrics"]["final_box_widths"].as_array().unwrap();
    assert!(widths.iter().all(|w| w.as_f64() == Some(0.0)));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["simulate", "--scenario", "nonlinear2d", "--smid", "sometimes"],
        vec!["simulate", "--scenario", "pendulum"],
        vec!["simulate", "--scenario", "nonlinear2d", "--dt", "-1"],
        vec!["simulate", "--scenario", "nonlinear2d", "--smid", "on", "--dt", "0.07"],
        vec!["dump-scenario", "pendulum"],
        vec!["compare", "missing/a.json", "missing/b.json"],
        vec!["frobnicate"],
    ] {
        let out = rcbf(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn simulation_failure_exits_one() {
    // an identification band far below the quadrature error
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"scenario":"nonlinear2d","smid":"on","smid_params":{"window":0.3,"epsilon":1e-9,"capacity":20}}"#;
    std::fs::write(dir.path().join("c.json"), cfg).unwrap();
    let out = rcbf(&["simulate", "--config", "c.json", "--T", "1", "--out", "f"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    let s = json(&dir.path().join("f/summary.json"));
    assert!(s["failure"].as_str().unwrap().contains("identification conflict"));
}

#[test]
fn dump_scenario_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = rcbf(&["dump-scenario", "planar-robot"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["obstacle"]["center"], serde_json::json!([-2.5, 2.5]));
    assert_eq!(v["obstacle"]["radius"], 1.5);
    let out = rcbf(&["dump-scenario", "nonlinear2d"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["theta0"]["lower"], serde_json::json!([-1.2, -2.0, 0.5, 0.8]));
    assert_eq!(v["theta0"]["upper"], serde_json::json!([-0.2, -0.1, 1.4, 1.2]));
}

#[test]
fn compare_is_byte_stable_and_zero_on_identical_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(rcbf(&["simulate", "--scenario", "planar-robot", "--smid", "on", "--T", "1", "--out", "a"], d).status.success());
    let out = rcbf(&["compare", "a", "a/summary.json", "--out", "c1.json"], d);
    assert!(out.status.success());
    let c = json(&d.join("c1.json"));
    assert_eq!(c["delta_min_h"], 0.0);
    assert_eq!(c["delta_effort"], 0.0);
    assert_eq!(c["peak_input_ratio"], 1.0);
    assert!(rcbf(&["compare", "a", "a", "--out", "c2.json"], d).status.success());
    assert_eq!(std::fs::read(d.join("c1.json")).unwrap(), std::fs::read(d.join("c2.json")).unwrap());
}
