//! Barrier and Lyapunov candidates and their robust affine constraints.
//!
//! Every robust condition (first-order barrier, second-order barrier,
//! Lyapunov decrease) compiles into a [`RobustAffineConstraint`]:
//!
//! ```text
//! c0 + c_u·u + c_F·θ_f + Σ_i c_G[i] u_i θ_{g_i}   (≥ | ≤)   rhs
//! ```

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::ControlAffineModel;
use crate::uncertainty::{Extremum, ParameterBox};
use crate::{Error, Result};

/// Extended class-K function `gain·s^k` (odd `k`) or `gain·s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassKappa {
    Linear { gain: f64 },
    Power { gain: f64, exponent: u32 },
}

impl ClassKappa {
    pub fn linear(gain: f64) -> Self {
        assert!(gain > 0.0, "class-K gain must be positive");
        ClassKappa::Linear { gain }
    }

    pub fn power(gain: f64, exponent: u32) -> Self {
        assert!(gain > 0.0, "class-K gain must be positive");
        assert!(exponent % 2 == 1, "odd exponent keeps the function increasing on ℝ");
        ClassKappa::Power { gain, exponent }
    }

    pub fn value(&self, s: f64) -> f64 {
        match *self {
            ClassKappa::Linear { gain } => gain * s,
            ClassKappa::Power { gain, exponent } => gain * s.powi(exponent as i32),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            ClassKappa::Linear { gain } => gain,
            ClassKappa::Power { gain, exponent } => {
                gain * exponent as f64 * s.powi(exponent as i32 - 1)
            }
        }
    }
}

pub fn eval_kappa(alpha: &ClassKappa, s: f64) -> f64 {
    alpha.value(s)
}

pub fn eval_kappa_deriv(alpha: &ClassKappa, s: f64) -> f64 {
    alpha.derivative(s)
}

/// Smooth scalar function of the state with closed-form derivatives.
pub trait ScalarField: Debug + Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// `h(x) = 1 - x₁ - x₂²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParabolicBarrier;

impl ScalarField for ParabolicBarrier {
    fn value(&self, x: &DVector<f64>) -> f64 {
        1.0 - x[0] - x[1] * x[1]
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![-1.0, -2.0 * x[1]])
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -2.0])
    }
}

/// `h(x) = (x₁ - c₁)² + (x₂ - c₂)² - r²` on an `n`-dimensional state whose
/// first two coordinates are a planar position.
#[derive(Debug, Clone, Copy)]
pub struct DiskExclusion {
    pub center: [f64; 2],
    pub radius: f64,
    pub state_dim: usize,
}

impl ScalarField for DiskExclusion {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        dx * dx + dy * dy - self.radius * self.radius
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.state_dim);
        g[0] = 2.0 * (x[0] - self.center[0]);
        g[1] = 2.0 * (x[1] - self.center[1]);
        g
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.state_dim, self.state_dim);
        h[(0, 0)] = 2.0;
        h[(1, 1)] = 2.0;
        h
    }
}

/// `V(x) = ¼x₁⁴ + ½x₂²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuarticLyapunov;

impl ScalarField for QuarticLyapunov {
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.25 * x[0].powi(4) + 0.5 * x[1] * x[1]
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0].powi(3), x[1]])
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[3.0 * x[0] * x[0], 0.0, 0.0, 1.0])
    }
}

/// `V(p, v) = ½‖p‖² + ½‖p + v‖²` for a planar double integrator.
///
/// The cross term makes `∇V` non-zero along the input directions except on
/// `p + v = 0`, where the drift alone gives `V̇ = -‖p‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleIntegratorLyapunov;

impl ScalarField for DoubleIntegratorLyapunov {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let (px, py, vx, vy) = (x[0], x[1], x[2], x[3]);
        0.5 * (px * px + py * py) + 0.5 * ((px + vx).powi(2) + (py + vy).powi(2))
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (px, py, vx, vy) = (x[0], x[1], x[2], x[3]);
        DVector::from_vec(vec![2.0 * px + vx, 2.0 * py + vy, px + vx, py + vy])
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.0, 1.0, 0.0, //
                0.0, 2.0, 0.0, 1.0, //
                1.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 1.0,
            ],
        )
    }
}

/// Relative degree of a barrier with respect to both input and parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarrierOrder {
    First,
    /// `ψ₁ = ḣ + α₁(h)` is enforced through `ψ̇₁ ≥ -α(ψ₁)`.
    Second { alpha1: ClassKappa },
}

#[derive(Debug, Clone)]
pub struct BarrierCandidate {
    pub field: Arc<dyn ScalarField>,
    pub alpha: ClassKappa,
    pub order: BarrierOrder,
}

impl BarrierCandidate {
    pub fn first_order(field: Arc<dyn ScalarField>, alpha: ClassKappa) -> Self {
        Self {
            field,
            alpha,
            order: BarrierOrder::First,
        }
    }

    pub fn second_order(field: Arc<dyn ScalarField>, alpha: ClassKappa, alpha1: ClassKappa) -> Self {
        Self {
            field,
            alpha,
            order: BarrierOrder::Second { alpha1 },
        }
    }

    pub fn relative_degree(&self) -> u8 {
        match self.order {
            BarrierOrder::First => 1,
            BarrierOrder::Second { .. } => 2,
        }
    }

    pub fn h(&self, x: &DVector<f64>) -> f64 {
        self.field.value(x)
    }

    /// `ψ₁(x) = ∇h·f(x) + α₁(h(x))`; `None` for first-order barriers.
    pub fn psi1(&self, model: &dyn ControlAffineModel, x: &DVector<f64>) -> Option<f64> {
        match self.order {
            BarrierOrder::First => None,
            BarrierOrder::Second { alpha1 } => {
                let h = self.field.value(x);
                Some(self.field.gradient(x).dot(&model.drift(x)) + alpha1.value(h))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LyapunovCandidate {
    pub field: Arc<dyn ScalarField>,
    pub gamma: ClassKappa,
}

impl LyapunovCandidate {
    pub fn new(field: Arc<dyn ScalarField>, gamma: ClassKappa) -> Self {
        Self { field, gamma }
    }

    pub fn v(&self, x: &DVector<f64>) -> f64 {
        self.field.value(x)
    }
}

/// Direction of a robust affine constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintSense {
    /// Barrier type, must hold for the minimizing parameter.
    AtLeast,
    /// Lyapunov type, must hold for the maximizing parameter.
    AtMost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustAffineConstraint {
    pub sense: ConstraintSense,
    pub c0: f64,
    pub c_u: DVector<f64>,
    pub c_f: DVector<f64>,
    pub c_g: DVector<f64>,
    pub rhs: f64,
}

impl RobustAffineConstraint {
    pub fn input_dim(&self) -> usize {
        self.c_u.len()
    }

    pub fn param_dim(&self) -> usize {
        self.c_f.len() + self.c_g.len()
    }

    /// `(c_F ∥ c_G ⊙ u)`, the coefficient of `θ` at input `u`.
    pub fn parameter_coefficients(&self, u: &DVector<f64>) -> DVector<f64> {
        let p = self.c_f.len();
        DVector::from_fn(self.param_dim(), |i, _| {
            if i < p {
                self.c_f[i]
            } else {
                self.c_g[i - p] * u[i - p]
            }
        })
    }

    /// Left-hand side at a specific parameter value.
    pub fn lhs(&self, u: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.c0 + self.c_u.dot(u) + self.parameter_coefficients(u).dot(theta)
    }

    /// Signed margin at the worst parameter in `bx`, computed in closed form.
    ///
    /// Non-negative means satisfied for `AtLeast`; non-positive means
    /// satisfied for `AtMost`.
    pub fn worst_case_margin(&self, bx: &ParameterBox, u: &DVector<f64>) -> Result<f64> {
        if u.len() != self.input_dim() {
            return Err(Error::dim("worst_case_margin input", self.input_dim(), u.len()));
        }
        let extremum = match self.sense {
            ConstraintSense::AtLeast => Extremum::Min,
            ConstraintSense::AtMost => Extremum::Max,
        };
        let (worst, _) = bx.worst_case(&self.parameter_coefficients(u), extremum)?;
        Ok(self.c0 + self.c_u.dot(u) + worst - self.rhs)
    }
}

fn lie_terms(
    model: &dyn ControlAffineModel,
    row: &DVector<f64>,
    x: &DVector<f64>,
) -> (f64, DVector<f64>, DVector<f64>, DVector<f64>) {
    let c0 = row.dot(&model.drift(x));
    let c_u = model.input_matrix(x).tr_mul(row);
    let c_f = model.drift_regressor(x).tr_mul(row);
    let c_g = model.input_regressor(x).tr_mul(row);
    (c0, c_u, c_f, c_g)
}

fn check_state(model: &dyn ControlAffineModel, x: &DVector<f64>) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::dim("constraint state", model.state_dim(), x.len()));
    }
    Ok(())
}

/// Robust first-order barrier condition `ḣ ≥ -α(h)`.
pub fn rcbf_constraint(
    model: &dyn ControlAffineModel,
    barrier: &BarrierCandidate,
    x: &DVector<f64>,
) -> Result<RobustAffineConstraint> {
    if barrier.relative_degree() != 1 {
        return Err(Error::RelativeDegree {
            required: 1,
            found: barrier.relative_degree(),
        });
    }
    check_state(model, x)?;
    let grad = barrier.field.gradient(x);
    let (c0, c_u, c_f, c_g) = lie_terms(model, &grad, x);
    Ok(RobustAffineConstraint {
        sense: ConstraintSense::AtLeast,
        c0,
        c_u,
        c_f,
        c_g,
        rhs: -barrier.alpha.value(barrier.field.value(x)),
    })
}

/// Robust Lyapunov decrease `V̇ ≤ -γ(V)`.
pub fn rclf_constraint(
    model: &dyn ControlAffineModel,
    lyap: &LyapunovCandidate,
    x: &DVector<f64>,
) -> Result<RobustAffineConstraint> {
    check_state(model, x)?;
    let grad = lyap.field.gradient(x);
    let (c0, c_u, c_f, c_g) = lie_terms(model, &grad, x);
    Ok(RobustAffineConstraint {
        sense: ConstraintSense::AtMost,
        c0,
        c_u,
        c_f,
        c_g,
        rhs: -lyap.gamma.value(lyap.field.value(x)),
    })
}

const DEGREE_TWO_TOL: f64 = 1e-12;

/// Robust second-order barrier condition `ψ̇₁ ≥ -α(ψ₁)` with
/// `ψ₁ = ∇h·f + α₁(h)`.
///
/// Requires `∇h·g`, `∇h·F` and `∇h·G` to vanish at `x`, so that neither the
/// input nor the parameters appear in `ḣ`.
pub fn hocbf_constraint(
    model: &dyn ControlAffineModel,
    barrier: &BarrierCandidate,
    x: &DVector<f64>,
) -> Result<RobustAffineConstraint> {
    let alpha1 = match barrier.order {
        BarrierOrder::Second { alpha1 } => alpha1,
        BarrierOrder::First => {
            return Err(Error::RelativeDegree {
                required: 2,
                found: 1,
            })
        }
    };
    check_state(model, x)?;
    let grad = barrier.field.gradient(x);
    let (hdot, lg, lf_reg, lg_reg) = lie_terms(model, &grad, x);
    let leak = lg.amax().max(lf_reg.amax()).max(lg_reg.amax());
    if leak > DEGREE_TWO_TOL {
        return Err(Error::HighOrderPrecondition(format!(
            "input or parameters appear in the first derivative of h (|coefficient| = {leak:e})"
        )));
    }

    let h = barrier.field.value(x);
    // gradient of ∇h·f
    let d = barrier.field.hessian(x) * model.drift(x) + model.drift_jacobian(x).tr_mul(&grad);
    let (d_f, c_u, c_f, c_g) = lie_terms(model, &d, x);
    let psi1 = hdot + alpha1.value(h);
    Ok(RobustAffineConstraint {
        sense: ConstraintSense::AtLeast,
        c0: d_f + alpha1.derivative(h) * hdot,
        c_u,
        c_f,
        c_g,
        rhs: -barrier.alpha.value(psi1),
    })
}

/// Dispatch on the barrier's relative degree.
pub fn barrier_constraint(
    model: &dyn ControlAffineModel,
    barrier: &BarrierCandidate,
    x: &DVector<f64>,
) -> Result<RobustAffineConstraint> {
    match barrier.order {
        BarrierOrder::First => rcbf_constraint(model, barrier, x),
        BarrierOrder::Second { .. } => hocbf_constraint(model, barrier, x),
    }
}
