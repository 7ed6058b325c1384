//! Robust CBF / CLF quadratic programs.
//!
//! For a robust constraint with parameter coefficient `ℓ(u) = (c_F ∥ c_G ⊙ u)`
//! and parameter polytope `{θ | Aθ ≤ b}`, the worst case `inf_θ ℓ(u)·θ` is
//! the LP dual `sup { bᵀμ | Aᵀμ = ℓ(u), μ ≤ 0 }`. Since `ℓ(u)` is affine in
//! `u`, appending `μ` to the decision vector keeps every condition linear:
//!
//! ```text
//! min_{u, μ}  ½‖u - k_d‖²
//! s.t.        c0 + c_u·u + bᵀμ ≥ rhs,   Aᵀμ = ℓ(u),   μ ≤ 0
//! ```
//!
//! Lyapunov constraints mirror this with `λ ≥ 0` and `≤`.

use nalgebra::{DMatrix, DVector};

use crate::certificates::{
    barrier_constraint, rclf_constraint, BarrierCandidate, ConstraintSense, LyapunovCandidate,
    RobustAffineConstraint,
};
use crate::model::ControlAffineModel;
use crate::opt::{solve_qp, Constraints, QuadraticProgram, SolveStatus};
use crate::uncertainty::{HalfspaceForm, ParameterBox};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSettings {
    /// Ridge on the dual block of the QP Hessian.
    pub dual_ridge: f64,
    /// Quadratic penalty on a non-negative slack relaxing Lyapunov
    /// constraints; `None` keeps them hard.
    pub clf_slack_penalty: Option<f64>,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            dual_ridge: 1e-8,
            clf_slack_penalty: None,
        }
    }
}

impl ControllerSettings {
    pub fn with_clf_slack(mut self, penalty: f64) -> Self {
        self.clf_slack_penalty = Some(penalty);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: DVector<f64>,
    /// One dual vector per robust constraint, in halfspace row order
    /// (`μ ≤ 0` for barriers, `λ ≥ 0` for Lyapunov constraints).
    pub duals: Vec<DVector<f64>>,
    /// `c0 + c_u·u + bᵀ(dual) - rhs` per constraint.
    pub worst_case_margin: Vec<f64>,
    pub status: SolveStatus,
    /// Lyapunov slack, when relaxation is enabled.
    pub slack: Option<f64>,
}

/// Result of the Lyapunov-then-barrier pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// RCLF-QP solution used as the nominal input.
    pub nominal: ControlOutput,
    /// Barrier-filtered input that is applied.
    pub filtered: ControlOutput,
}

impl PipelineOutput {
    /// Whether the barrier filter changed the nominal input.
    pub fn filter_active(&self) -> bool {
        (&self.filtered.u - &self.nominal.u).amax() > 1e-9
    }
}

/// Closed-form signed worst-case margin of `constraint` at `u` over `bx`.
///
/// This path uses the box oracle only and never looks at QP duals.
pub fn verify_worst_case(constraint: &RobustAffineConstraint, bx: &ParameterBox, u: &DVector<f64>) -> Result<f64> {
    constraint.worst_case_margin(bx, u)
}

/// Solves the dualized robust QP `min ½‖u - reference‖²` subject to every
/// constraint in `constraints` holding for all `θ` in `polytope`.
pub fn robust_qp(
    constraints: &[RobustAffineConstraint],
    polytope: &HalfspaceForm,
    reference: &DVector<f64>,
    input_bounds: Option<&ParameterBox>,
    settings: &ControllerSettings,
) -> Result<ControlOutput> {
    let m = reference.len();
    let d = polytope.dim();
    let rows = polytope.rows();
    for c in constraints {
        if c.input_dim() != m {
            return Err(Error::dim("robust constraint input", m, c.input_dim()));
        }
        if c.param_dim() != d {
            return Err(Error::dim("robust constraint parameters", d, c.param_dim()));
        }
    }
    if let Some(ib) = input_bounds {
        if ib.dim() != m {
            return Err(Error::dim("input bounds", m, ib.dim()));
        }
    }

    let k = constraints.len();
    let use_slack = settings.clf_slack_penalty.is_some()
        && constraints.iter().any(|c| c.sense == ConstraintSense::AtMost);
    let dual_offset = |i: usize| m + i * rows;
    let slack_idx = m + k * rows;
    let n = slack_idx + usize::from(use_slack);

    let mut hessian = DMatrix::zeros(n, n);
    let mut linear = DVector::zeros(n);
    for j in 0..m {
        hessian[(j, j)] = 1.0;
        linear[j] = -reference[j];
    }
    for j in m..slack_idx {
        hessian[(j, j)] = settings.dual_ridge;
    }
    if use_slack {
        hessian[(slack_idx, slack_idx)] = 2.0 * settings.clf_slack_penalty.unwrap_or_default();
    }

    let mut cons = Constraints::free(n);
    if let Some(ib) = input_bounds {
        for j in 0..m {
            cons.bound(j, ib.lower()[j], ib.upper()[j]);
        }
    }
    for (ci, c) in constraints.iter().enumerate() {
        let off = dual_offset(ci);
        let mut row = DVector::zeros(n);
        row.rows_mut(0, m).copy_from(&c.c_u);
        row.rows_mut(off, rows).copy_from(&polytope.b);
        match c.sense {
            ConstraintSense::AtLeast => {
                cons.geq(row, c.rhs - c.c0);
                for j in off..off + rows {
                    cons.bound(j, f64::NEG_INFINITY, 0.0);
                }
            }
            ConstraintSense::AtMost => {
                if use_slack {
                    row[slack_idx] = -1.0;
                }
                cons.leq(row, c.rhs - c.c0);
                for j in off..off + rows {
                    cons.bound(j, 0.0, f64::INFINITY);
                }
            }
        }
        // Aᵀ(dual) = ℓ(u), moved to the left: Aᵀ(dual) - c_G ⊙ u = c_F
        let p = c.c_f.len();
        for i in 0..d {
            let mut eq = DVector::zeros(n);
            eq.rows_mut(off, rows).copy_from(&polytope.a.column(i));
            let rhs = if i < p {
                c.c_f[i]
            } else {
                eq[i - p] = -c.c_g[i - p];
                0.0
            };
            cons.equal(eq, rhs);
        }
    }
    if use_slack {
        cons.bound(slack_idx, 0.0, f64::INFINITY);
    }

    let qp = QuadraticProgram {
        hessian,
        linear,
        constraints: cons,
    };
    let res = solve_qp(&qp);
    if !res.is_optimal() {
        let most_violated = most_violated(constraints, polytope, reference);
        return Err(Error::ControllerInfeasible {
            status: res.status.to_string(),
            most_violated,
        });
    }

    let z = res.solution;
    let u = z.rows(0, m).into_owned();
    let duals: Vec<DVector<f64>> = (0..k).map(|ci| z.rows(dual_offset(ci), rows).into_owned()).collect();
    let worst_case_margin = constraints
        .iter()
        .zip(&duals)
        .map(|(c, dual)| c.c0 + c.c_u.dot(&u) + polytope.b.dot(dual) - c.rhs)
        .collect();
    Ok(ControlOutput {
        u,
        duals,
        worst_case_margin,
        status: res.status,
        slack: use_slack.then(|| z[slack_idx]),
    })
}

/// Index of the constraint whose worst case is most violated at `reference`.
fn most_violated(constraints: &[RobustAffineConstraint], polytope: &HalfspaceForm, reference: &DVector<f64>) -> usize {
    let Some(bx) = canonical_box(polytope) else {
        return 0;
    };
    let mut worst = (0, f64::INFINITY);
    for (i, c) in constraints.iter().enumerate() {
        let Ok(margin) = c.worst_case_margin(&bx, reference) else {
            continue;
        };
        let satisfaction = match c.sense {
            ConstraintSense::AtLeast => margin,
            ConstraintSense::AtMost => -margin,
        };
        if satisfaction < worst.1 {
            worst = (i, satisfaction);
        }
    }
    worst.0
}

/// Recovers the box from its canonical halfspace form (`+I` rows first).
fn canonical_box(polytope: &HalfspaceForm) -> Option<ParameterBox> {
    let d = polytope.dim();
    if polytope.rows() != 2 * d {
        return None;
    }
    let lower: Vec<f64> = (0..d).map(|i| -polytope.b[d + i]).collect();
    let upper: Vec<f64> = (0..d).map(|i| polytope.b[i]).collect();
    ParameterBox::new(lower, upper).ok()
}

/// Robust CBF safety filter around the nominal input `k_d`.
pub fn rcbf_filter(
    model: &dyn ControlAffineModel,
    barriers: &[BarrierCandidate],
    bx: &ParameterBox,
    x: &DVector<f64>,
    k_d: &DVector<f64>,
    settings: &ControllerSettings,
) -> Result<ControlOutput> {
    if bx.dim() != model.param_dim() {
        return Err(Error::dim("parameter box", model.param_dim(), bx.dim()));
    }
    let constraints = barriers
        .iter()
        .map(|b| barrier_constraint(model, b, x))
        .collect::<Result<Vec<_>>>()?;
    robust_qp(&constraints, &bx.to_halfspace(), k_d, model.input_bounds(), settings)
}

/// Minimum-norm input satisfying the robust Lyapunov decrease condition.
pub fn rclf_policy(
    model: &dyn ControlAffineModel,
    lyap: &LyapunovCandidate,
    bx: &ParameterBox,
    x: &DVector<f64>,
    settings: &ControllerSettings,
) -> Result<ControlOutput> {
    if bx.dim() != model.param_dim() {
        return Err(Error::dim("parameter box", model.param_dim(), bx.dim()));
    }
    let constraint = rclf_constraint(model, lyap, x)?;
    let zero = DVector::zeros(model.input_dim());
    robust_qp(&[constraint], &bx.to_halfspace(), &zero, model.input_bounds(), settings)
}

/// RCLF-QP output filtered through the RCBF-QP.
pub fn pipeline_policy(
    model: &dyn ControlAffineModel,
    lyap: &LyapunovCandidate,
    barriers: &[BarrierCandidate],
    bx: &ParameterBox,
    x: &DVector<f64>,
    settings: &ControllerSettings,
) -> Result<PipelineOutput> {
    let nominal = rclf_policy(model, lyap, bx, x, settings)?;
    let filtered = rcbf_filter(model, barriers, bx, x, &nominal.u, settings)?;
    Ok(PipelineOutput { nominal, filtered })
}
