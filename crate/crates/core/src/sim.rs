//! Fixed-step closed-loop simulation with sample-and-hold control and the
//! set-membership identifier in the loop.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificates::{barrier_constraint, rclf_constraint};
use crate::controller::{pipeline_policy, rcbf_filter, rclf_policy, verify_worst_case, ControllerSettings};
use crate::model::{dynamics, ControlAffineModel};
use crate::scenarios::Scenario;
use crate::smid::{schedule, update_set, HistoryStack, SmidConfig, WindowAccumulator};
use crate::uncertainty::ParameterBox;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    /// RCLF-QP filtered through the RCBF-QP.
    Pipeline,
    /// RCBF-QP around a zero nominal input.
    Rcbf,
    /// RCLF-QP alone.
    Rclf,
    /// Pipeline on the singleton box of the true parameters.
    Exact,
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pipeline" => Ok(ControllerKind::Pipeline),
            "rcbf" => Ok(ControllerKind::Rcbf),
            "rclf" => Ok(ControllerKind::Rclf),
            "exact" => Ok(ControllerKind::Exact),
            other => Err(Error::InvalidConfig(format!("unknown controller `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    /// `None` disables identification.
    pub smid: Option<SmidConfig>,
    pub controller: ControllerKind,
    /// Seed for the sampled certificate probe after each box update.
    pub seed: u64,
    /// Number of sampled states in that probe (0 disables it).
    pub probe_states: usize,
    /// Quadratic penalty of the optional Lyapunov slack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clf_slack_penalty: Option<f64>,
}

impl SimConfig {
    /// Scenario defaults with identification switched on or off.
    pub fn for_scenario(scenario: &Scenario, smid: bool) -> Self {
        Self {
            dt: scenario.dt,
            horizon: scenario.horizon,
            x0: scenario.x0.as_slice().to_vec(),
            smid: smid.then_some(scenario.smid),
            controller: ControllerKind::Pipeline,
            seed: 0,
            probe_states: 100,
            clf_slack_penalty: None,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self, model: &dyn ControlAffineModel) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::InvalidConfig(format!("horizon {} is shorter than dt", self.horizon)));
        }
        if self.x0.len() != model.state_dim() {
            return Err(Error::dim("initial state", model.state_dim(), self.x0.len()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        if let Some(s) = &self.smid {
            s.validate_step(self.dt)?;
        }
        Ok(())
    }

    fn settings(&self) -> ControllerSettings {
        ControllerSettings {
            clf_slack_penalty: self.clf_slack_penalty,
            ..ControllerSettings::default()
        }
    }
}

/// Classical RK4 step of the true dynamics with `u` held constant.
pub fn rk4_step(
    model: &dyn ControlAffineModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    let k1 = dynamics(model, x, u, theta)?;
    let k2 = dynamics(model, &(x + &k1 * (0.5 * dt)), u, theta)?;
    let k3 = dynamics(model, &(x + &k2 * (0.5 * dt)), u, theta)?;
    let k4 = dynamics(model, &(x + &k3 * dt), u, theta)?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("integrated state"));
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Nominal input before the barrier filter (equal to `u` without one).
    pub k_d: Vec<f64>,
    /// One value per barrier.
    pub h: Vec<f64>,
    /// `ψ₁` per barrier, for second-order barriers.
    pub psi1: Vec<Option<f64>>,
    pub v: f64,
    /// Smallest worst-case barrier margin over the controller's box at `u`.
    pub margin_barrier: f64,
    /// Worst-case Lyapunov margin over the controller's box at `u` (≤ 0 is decrease).
    pub margin_clf: f64,
    pub filter_active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clf_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub t: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Contained in the previous record, componentwise.
    pub nested: bool,
    pub contains_truth: bool,
    /// Smallest change of the sampled certificate margins caused by the
    /// update (negative would mean a certificate got worse).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_min_gain: Option<f64>,
}

impl BoxRecord {
    fn new(t: f64, bx: &ParameterBox, nested: bool, truth: &DVector<f64>) -> Self {
        Self {
            t,
            lower: bx.lower().as_slice().to_vec(),
            upper: bx.upper().as_slice().to_vec(),
            nested,
            contains_truth: bx.contains(truth).unwrap_or(false),
            probe_min_gain: None,
        }
    }

    pub fn to_box(&self) -> Result<ParameterBox> {
        ParameterBox::new(self.lower.clone(), self.upper.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub steps: Vec<StepRecord>,
    /// Initial box followed by one record per update.
    pub boxes: Vec<BoxRecord>,
    pub failure: Option<String>,
}

impl TrajectoryLog {
    pub fn final_box(&self) -> Option<&BoxRecord> {
        self.boxes.last()
    }
}

struct Controller<'a> {
    scenario: &'a Scenario,
    kind: ControllerKind,
    settings: ControllerSettings,
}

struct Applied {
    u: DVector<f64>,
    k_d: DVector<f64>,
    filter_active: bool,
    clf_slack: Option<f64>,
}

impl Controller<'_> {
    fn compute(&self, bx: &ParameterBox, x: &DVector<f64>) -> Result<Applied> {
        let s = self.scenario;
        let model = s.model.as_ref();
        match self.kind {
            ControllerKind::Pipeline | ControllerKind::Exact => {
                let out = pipeline_policy(model, &s.lyapunov, &s.barriers, bx, x, &self.settings)?;
                Ok(Applied {
                    filter_active: out.filter_active(),
                    clf_slack: out.nominal.slack,
                    u: out.filtered.u,
                    k_d: out.nominal.u,
                })
            }
            ControllerKind::Rcbf => {
                let k_d = DVector::zeros(model.input_dim());
                let out = rcbf_filter(model, &s.barriers, bx, x, &k_d, &self.settings)?;
                Ok(Applied {
                    filter_active: (&out.u - &k_d).amax() > 1e-9,
                    clf_slack: None,
                    u: out.u,
                    k_d,
                })
            }
            ControllerKind::Rclf => {
                let out = rclf_policy(model, &s.lyapunov, bx, x, &self.settings)?;
                Ok(Applied {
                    filter_active: false,
                    clf_slack: out.slack,
                    k_d: out.u.clone(),
                    u: out.u,
                })
            }
        }
    }
}

/// Oracle margins of every certificate at `(x, u)` over `bx`.
fn margins(scenario: &Scenario, bx: &ParameterBox, x: &DVector<f64>, u: &DVector<f64>) -> Result<(f64, f64)> {
    let model = scenario.model.as_ref();
    let mut barrier = f64::INFINITY;
    for b in &scenario.barriers {
        let c = barrier_constraint(model, b, x)?;
        barrier = barrier.min(verify_worst_case(&c, bx, u)?);
    }
    let c = rclf_constraint(model, &scenario.lyapunov, x)?;
    Ok((barrier, verify_worst_case(&c, bx, u)?))
}

/// Smallest improvement of the barrier and Lyapunov margins from `old` to
/// `new` over states and inputs sampled around `(x, u)`.
fn probe(
    scenario: &Scenario,
    old: &ParameterBox,
    new: &ParameterBox,
    x: &DVector<f64>,
    u: &DVector<f64>,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut gain = f64::INFINITY;
    for _ in 0..samples {
        let xs = x.map(|xi| xi + rng.gen_range(-1.0..1.0));
        let us = u.map(|ui| ui + rng.gen_range(-1.0..1.0) * (1.0 + ui.abs()));
        let (b_old, v_old) = margins(scenario, old, &xs, &us)?;
        let (b_new, v_new) = margins(scenario, new, &xs, &us)?;
        gain = gain.min(b_new - b_old).min(v_old - v_new);
    }
    Ok(gain)
}

/// Runs the closed loop. Controller or identification failures truncate the
/// log and set [`TrajectoryLog::failure`]; invalid configurations are errors.
pub fn run(scenario: &Scenario, config: &SimConfig) -> Result<TrajectoryLog> {
    let model = scenario.model.as_ref();
    config.validate(model)?;
    let truth = &scenario.truth.0;
    let exact = config.controller == ControllerKind::Exact;
    let mut bx = if exact {
        ParameterBox::singleton(truth)?
    } else {
        scenario.theta0.clone()
    };
    // identification has nothing to learn on the exact model
    let smid = config.smid.filter(|_| !exact);

    let controller = Controller {
        scenario,
        kind: config.controller,
        settings: config.settings(),
    };
    let dt = config.dt;
    let n_steps = config.steps();
    let mut x = DVector::from_column_slice(&config.x0);
    let mut log = TrajectoryLog {
        steps: Vec::with_capacity(n_steps + 1),
        boxes: vec![BoxRecord::new(0.0, &bx, true, truth)],
        failure: None,
    };
    let mut acc = match &smid {
        Some(cfg) => Some(WindowAccumulator::new(model, cfg, dt, x.clone())?),
        None => None,
    };
    let mut stack = HistoryStack::new(smid.map_or(1, |c| c.capacity));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let applied = match controller.compute(&bx, &x) {
            Ok(a) => a,
            Err(e) => {
                log.failure = Some(format!("t = {t:.4}: {e}"));
                break;
            }
        };
        let (margin_barrier, margin_clf) = margins(scenario, &bx, &x, &applied.u)?;
        log.steps.push(StepRecord {
            t,
            x: x.as_slice().to_vec(),
            u: applied.u.as_slice().to_vec(),
            k_d: applied.k_d.as_slice().to_vec(),
            h: scenario.barriers.iter().map(|b| b.h(&x)).collect(),
            psi1: scenario.barriers.iter().map(|b| b.psi1(model, &x)).collect(),
            v: scenario.lyapunov.v(&x),
            margin_barrier,
            margin_clf,
            filter_active: applied.filter_active,
            clf_slack: applied.clf_slack,
        });
        if k == n_steps {
            break;
        }

        let next = match rk4_step(model, truth, &x, &applied.u, dt) {
            Ok(next) => next,
            Err(e) => {
                log.failure = Some(format!("t = {t:.4}: {e}"));
                break;
            }
        };
        let t_next = (k + 1) as f64 * dt;
        if let (Some(cfg), Some(acc)) = (&smid, acc.as_mut()) {
            if let Some(entry) = acc.accumulate(model, &x, &applied.u, &next, dt, t_next)? {
                stack.push(entry);
            }
            if schedule(t_next, cfg, dt) && !stack.is_empty() {
                match update_set(&bx, &stack, cfg.epsilon) {
                    Ok(new_box) => {
                        let mut rec = BoxRecord::new(t_next, &new_box, new_box.is_subset_of(&bx), truth);
                        if config.probe_states > 0 {
                            rec.probe_min_gain =
                                Some(probe(scenario, &bx, &new_box, &next, &applied.u, config.probe_states, &mut rng)?);
                        }
                        log.boxes.push(rec);
                        bx = new_box;
                    }
                    Err(e) => {
                        log.failure = Some(format!("t = {t_next:.4}: {e}"));
                        x = next;
                        log.steps.push(StepRecord {
                            t: t_next,
                            x: x.as_slice().to_vec(),
                            u: vec![f64::NAN; model.input_dim()],
                            k_d: vec![f64::NAN; model.input_dim()],
                            h: scenario.barriers.iter().map(|b| b.h(&x)).collect(),
                            psi1: scenario.barriers.iter().map(|b| b.psi1(model, &x)).collect(),
                            v: scenario.lyapunov.v(&x),
                            margin_barrier: f64::NAN,
                            margin_clf: f64::NAN,
                            filter_active: false,
                            clf_slack: None,
                        });
                        break;
                    }
                }
            }
        }
        x = next;
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Minimum over time and barriers of `h(x(t))`.
    #[serde(with = "crate::io::nullable")]
    pub min_h: f64,
    #[serde(with = "crate::io::nullable")]
    pub final_state_norm: f64,
    #[serde(with = "crate::io::nullable")]
    pub final_position_norm: f64,
    pub peak_input_inf: f64,
    /// Peak `‖u‖∞` over `t ∈ [0, 1]`.
    pub peak_input_inf_first_second: f64,
    /// Trapezoidal `∫‖u‖² dt`.
    pub effort: f64,
    pub final_box_widths: Vec<f64>,
    /// Final over initial box volume.
    #[serde(with = "crate::io::nullable")]
    pub volume_ratio: f64,
    pub box_updates: usize,
    pub steps: usize,
    pub final_time: f64,
}

/// Summary statistics of a log.
pub fn metrics(log: &TrajectoryLog, position_dim: usize) -> Metrics {
    let applied: Vec<&StepRecord> = log.steps.iter().filter(|s| s.u.iter().all(|v| v.is_finite())).collect();
    let min_h = log
        .steps
        .iter()
        .flat_map(|s| s.h.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let last = log.steps.last();
    let norm = |xs: &[f64]| xs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let inf = |xs: &[f64]| xs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let peak = applied.iter().map(|s| inf(&s.u)).fold(0.0, f64::max);
    let peak_first = applied
        .iter()
        .filter(|s| s.t <= 1.0 + 1e-9)
        .map(|s| inf(&s.u))
        .fold(0.0, f64::max);
    let effort = applied
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (norm(&w[0].u).powi(2) + norm(&w[1].u).powi(2)))
        .sum();
    let (final_box_widths, volume_ratio) = match (log.boxes.first(), log.boxes.last()) {
        (Some(first), Some(last)) => {
            let widths: Vec<f64> = last.upper.iter().zip(&last.lower).map(|(u, l)| u - l).collect();
            let vol = |b: &BoxRecord| b.upper.iter().zip(&b.lower).map(|(u, l)| u - l).product::<f64>();
            let v0 = vol(first);
            (widths, if v0 > 0.0 { vol(last) / v0 } else { 1.0 })
        }
        _ => (Vec::new(), 1.0),
    };
    Metrics {
        min_h,
        final_state_norm: last.map_or(f64::NAN, |s| norm(&s.x)),
        final_position_norm: last.map_or(f64::NAN, |s| norm(&s.x[..position_dim.min(s.x.len())])),
        peak_input_inf: peak,
        peak_input_inf_first_second: peak_first,
        effort,
        final_box_widths,
        volume_ratio,
        box_updates: log.boxes.len().saturating_sub(1),
        steps: log.steps.len(),
        final_time: last.map_or(0.0, |s| s.t),
    }
}
