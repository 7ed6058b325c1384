//! Integral set-membership identification.
//!
//! Integrating the dynamics over a window `[t - Δt, t]` gives a relation that
//! only involves measured states and inputs:
//!
//! ```text
//! Δx = 𝓕 + 𝓖 + 𝓢 θ,   𝓕 = ∫ f(x),  𝓖 = ∫ g(x) u,  𝓢 = ∫ φ(x, u)
//! ```
//!
//! Every stored window contributes the band `|Δx - 𝓕 - 𝓖 - 𝓢θ| ≤ ε`. The new
//! parameter box is the bounding box of the previous box intersected with all
//! bands, computed with one LP per bound.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{regressor, ControlAffineModel};
use crate::opt::{solve_lp, Constraints, LinearProgram, Objective, SolveStatus};
use crate::uncertainty::{Extremum, ParameterBox};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmidConfig {
    /// Integration window `Δt` in seconds.
    pub window: f64,
    /// Band half-width `ε`, in state units.
    pub epsilon: f64,
    /// History stack capacity `M`.
    pub capacity: usize,
    /// Seconds between box updates; defaults to the window length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_period: Option<f64>,
}

impl SmidConfig {
    pub fn new(window: f64, epsilon: f64, capacity: usize) -> Result<Self> {
        let c = Self {
            window,
            epsilon,
            capacity,
            update_period: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn period(&self) -> f64 {
        self.update_period.unwrap_or(self.window)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::InvalidConfig(format!("SMID window must be positive, got {}", self.window)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("SMID epsilon must be positive, got {}", self.epsilon)));
        }
        if self.capacity == 0 {
            return Err(Error::InvalidConfig("SMID history capacity must be at least 1".into()));
        }
        let period = self.period();
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidConfig(format!("SMID update period must be positive, got {period}")));
        }
        Ok(())
    }

    /// Checks that window and update period are whole numbers of steps `dt`.
    pub fn validate_step(&self, dt: f64) -> Result<()> {
        self.validate()?;
        for (what, len) in [("window", self.window), ("update period", self.period())] {
            steps_in(len, dt).ok_or_else(|| {
                Error::InvalidConfig(format!("SMID {what} {len} is not an integer multiple of dt = {dt}"))
            })?;
        }
        Ok(())
    }
}

/// Number of steps of size `dt` in `len`, if it is a whole number.
fn steps_in(len: f64, dt: f64) -> Option<usize> {
    let k = (len / dt).round();
    (k >= 1.0 && (k * dt - len).abs() <= 1e-9 * len.max(1.0)).then_some(k as usize)
}

/// Whether a window completes at time `t` (within half a step `dt`).
pub fn schedule(t: f64, config: &SmidConfig, dt: f64) -> bool {
    let period = config.period();
    let k = (t / period).round();
    k >= 1.0 && (t - k * period).abs() <= 0.5 * dt
}

/// One completed window: `Δx = 𝓕 + 𝓖 + 𝓢θ` up to quadrature error.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub dx: DVector<f64>,
    pub f_int: DVector<f64>,
    pub g_int: DVector<f64>,
    pub s_int: DMatrix<f64>,
    /// End time of the window.
    pub t: f64,
}

impl HistoryEntry {
    /// `Δx - 𝓕 - 𝓖`.
    pub fn residual(&self) -> DVector<f64> {
        &self.dx - &self.f_int - &self.g_int
    }
}

/// Trapezoidal integrals over the current window.
#[derive(Debug, Clone)]
pub struct WindowAccumulator {
    steps_per_window: usize,
    steps: usize,
    x_start: DVector<f64>,
    f_int: DVector<f64>,
    g_int: DVector<f64>,
    s_int: DMatrix<f64>,
}

impl WindowAccumulator {
    pub fn new(model: &dyn ControlAffineModel, config: &SmidConfig, dt: f64, x_start: DVector<f64>) -> Result<Self> {
        config.validate_step(dt)?;
        if x_start.len() != model.state_dim() {
            return Err(Error::dim("window start state", model.state_dim(), x_start.len()));
        }
        let n = model.state_dim();
        Ok(Self {
            steps_per_window: steps_in(config.window, dt).expect("validated"),
            steps: 0,
            x_start,
            f_int: DVector::zeros(n),
            g_int: DVector::zeros(n),
            s_int: DMatrix::zeros(n, model.param_dim()),
        })
    }

    /// Elapsed steps in the current window.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Adds the step from `x` to `x_next` under the held input `u`; returns
    /// the finished entry when the window closes at time `t_next`.
    pub fn accumulate(
        &mut self,
        model: &dyn ControlAffineModel,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
        dt: f64,
        t_next: f64,
    ) -> Result<Option<HistoryEntry>> {
        let half = 0.5 * dt;
        let phi0 = regressor(model, x, u)?;
        let phi1 = regressor(model, x_next, u)?;
        let f0 = model.drift(x);
        let f1 = model.drift(x_next);
        let gu0 = model.input_matrix(x) * u;
        let gu1 = model.input_matrix(x_next) * u;
        self.f_int += (f0 + f1) * half;
        self.g_int += (gu0 + gu1) * half;
        self.s_int += (phi0 + phi1) * half;
        if self.f_int.iter().chain(self.g_int.iter()).chain(self.s_int.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SMID window integrals"));
        }
        self.steps += 1;
        if self.steps < self.steps_per_window {
            return Ok(None);
        }
        let entry = HistoryEntry {
            dx: x_next - &self.x_start,
            f_int: self.f_int.clone(),
            g_int: self.g_int.clone(),
            s_int: self.s_int.clone(),
            t: t_next,
        };
        if entry.dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SMID state increment"));
        }
        self.steps = 0;
        self.x_start = x_next.clone();
        self.f_int.fill(0.0);
        self.g_int.fill(0.0);
        self.s_int.fill(0.0);
        Ok(Some(entry))
    }
}

/// FIFO buffer of the `capacity` most recent windows.
#[derive(Debug, Clone)]
pub struct HistoryStack {
    entries: VecDeque<HistoryEntry>,
    capacity: usize,
}

impl HistoryStack {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, entry: HistoryEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }
}

/// Whether `row·θ ∈ [r - ε, r + ε]` is satisfiable on its own over `bx`.
fn band_reachable(bx: &ParameterBox, row: &DVector<f64>, r: f64, eps: f64) -> bool {
    let lo = bx.worst_case(row, Extremum::Min).map(|w| w.0).unwrap_or(f64::NEG_INFINITY);
    let hi = bx.worst_case(row, Extremum::Max).map(|w| w.0).unwrap_or(f64::INFINITY);
    lo <= r + eps && hi >= r - eps
}

/// Stack entries with at least one band that misses `prev` entirely.
fn conflicting_entries(prev: &ParameterBox, stack: &HistoryStack, eps: f64) -> Vec<usize> {
    stack
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            let r = e.residual();
            (0..r.len()).any(|j| !band_reachable(prev, &e.s_int.row(j).transpose(), r[j], eps))
        })
        .map(|(k, _)| k)
        .collect()
}

/// Bounding box of `prev ∩ {θ : |Δxⱼ - 𝓕ⱼ - 𝓖ⱼ - 𝓢ⱼθ| ≤ ε for all entries}`.
///
/// The result is clamped into `prev`, so nesting holds exactly. An empty
/// intersection is an error naming the offending entries.
pub fn update_set(prev: &ParameterBox, stack: &HistoryStack, eps: f64) -> Result<ParameterBox> {
    if stack.is_empty() {
        return Err(Error::InvalidConfig("set update needs a nonempty history stack".into()));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidConfig(format!("SMID epsilon must be positive, got {eps}")));
    }
    let d = prev.dim();
    let mut cons = Constraints::free(d);
    for j in 0..d {
        cons.bound(j, prev.lower()[j], prev.upper()[j]);
    }
    for e in stack.iter() {
        if e.s_int.ncols() != d {
            return Err(Error::dim("history entry parameters", d, e.s_int.ncols()));
        }
        let r = e.residual();
        for j in 0..r.len() {
            let row = e.s_int.row(j).transpose();
            if row.iter().all(|&s| s == 0.0) {
                // parameter-free row: a pure consistency check
                if (r[j]).abs() > eps {
                    return Err(Error::IdentificationConflict {
                        epsilon: eps,
                        entries: conflicting_entries(prev, stack, eps),
                    });
                }
                continue;
            }
            cons.leq(row.clone(), r[j] + eps);
            cons.geq(row, r[j] - eps);
        }
    }

    let mut lower = prev.lower().clone();
    let mut upper = prev.upper().clone();
    for i in 0..d {
        let mut c = DVector::zeros(d);
        c[i] = 1.0;
        for (sense, target) in [(Objective::Minimize, &mut lower), (Objective::Maximize, &mut upper)] {
            let res = solve_lp(&LinearProgram::new(c.clone(), sense, cons.clone()));
            match res.status {
                SolveStatus::Optimal => target[i] = res.solution[i],
                SolveStatus::Infeasible => {
                    return Err(Error::IdentificationConflict {
                        epsilon: eps,
                        entries: conflicting_entries(prev, stack, eps),
                    })
                }
                // the previous bound stays valid when the LP gives no answer
                _ => {}
            }
        }
    }
    prev.tightened(&lower, &upper)
}
