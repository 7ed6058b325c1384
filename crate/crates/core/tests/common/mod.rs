#![allow(dead_code)]

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;

use robust_cbf::certificates::{ConstraintSense, RobustAffineConstraint};
use robust_cbf::scenarios::{Scenario, ScenarioName};
use robust_cbf::sim::{run, ControllerKind, SimConfig, TrajectoryLog};
use robust_cbf::uncertainty::ParameterBox;

pub fn random_box(rng: &mut impl Rng, d: usize) -> ParameterBox {
    let lower: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.0..2.0)).collect();
    ParameterBox::new(lower, upper).unwrap()
}

pub fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Random barrier-type constraint with `m` inputs and `p` drift parameters.
pub fn random_constraint(rng: &mut impl Rng, m: usize, p: usize) -> RobustAffineConstraint {
    RobustAffineConstraint {
        sense: ConstraintSense::AtLeast,
        c0: rng.gen_range(-2.0..2.0),
        c_u: random_vec(rng, m, 2.0),
        c_f: random_vec(rng, p, 2.0),
        c_g: random_vec(rng, m, 2.0),
        rhs: rng.gen_range(-2.0..2.0),
    }
}

/// `min ½‖u - k_d‖²` subject to the constraint at every vertex of `bx`,
/// by enumerating candidate active sets (at most two inputs).
pub fn vertex_qp(c: &RobustAffineConstraint, bx: &ParameterBox, k_d: &DVector<f64>) -> Option<DVector<f64>> {
    let m = k_d.len();
    assert!(m <= 2);
    let p = c.c_f.len();
    let rows: Vec<(DVector<f64>, f64)> = bx
        .vertices()
        .iter()
        .map(|v| {
            let theta_g = v.rows(p, m);
            let a = &c.c_u + c.c_g.component_mul(&theta_g);
            let b = c.rhs - c.c0 - c.c_f.dot(&v.rows(0, p));
            (a, b)
        })
        .collect();
    let feasible = |u: &DVector<f64>| rows.iter().all(|(a, b)| a.dot(u) >= b - 1e-9);
    let mut candidates = vec![k_d.clone()];
    for (a, b) in &rows {
        let nn = a.norm_squared();
        if nn > 1e-14 {
            candidates.push(k_d + a * ((b - a.dot(k_d)) / nn));
        }
    }
    if m == 2 {
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let (ai, bi) = &rows[i];
                let (aj, bj) = &rows[j];
                let det = ai[0] * aj[1] - ai[1] * aj[0];
                if det.abs() > 1e-12 {
                    let u0 = (bi * aj[1] - ai[1] * bj) / det;
                    let u1 = (ai[0] * bj - bi * aj[0]) / det;
                    candidates.push(DVector::from_vec(vec![u0, u1]));
                }
            }
        }
    }
    candidates
        .into_iter()
        .filter(|u| feasible(u))
        .min_by(|a, b| (a - k_d).norm().total_cmp(&(b - k_d).norm()))
}

pub struct ScenarioRun {
    pub label: String,
    pub scenario: Scenario,
    pub config: SimConfig,
    pub log: TrajectoryLog,
    pub elapsed: Duration,
}

pub fn scenario_run(name: ScenarioName, smid: bool, controller: ControllerKind) -> ScenarioRun {
    let scenario = Scenario::by_name(name);
    let mut config = SimConfig::for_scenario(&scenario, smid);
    config.controller = controller;
    let start = Instant::now();
    let log = run(&scenario, &config).expect("valid configuration");
    let label = format!(
        "{name} smid={} {}",
        if smid { "on" } else { "off" },
        serde_json::to_value(controller).unwrap().as_str().unwrap()
    );
    ScenarioRun {
        label,
        scenario,
        config,
        log,
        elapsed: start.elapsed(),
    }
}

/// Pipeline runs of both scenarios with identification on and off.
pub fn pipeline_runs() -> Vec<ScenarioRun> {
    let mut out = Vec::new();
    for name in [ScenarioName::Nonlinear2d, ScenarioName::PlanarRobot] {
        for smid in [false, true] {
            out.push(scenario_run(name, smid, ControllerKind::Pipeline));
        }
    }
    out
}
