//! Small dense LP and convex QP solvers.
//!
//! Both solvers work on the same constraint container, [`Constraints`]:
//! inequality rows `a·z ≤ b`, equality rows `a·z = b` and per-coordinate
//! bounds (possibly infinite). Pivoting and working-set rules are fixed, so
//! identical inputs give bitwise-identical outputs.

mod lp;
mod qp;

use nalgebra::{DMatrix, DVector};

pub use lp::solve_lp;
pub use qp::solve_qp;

/// Primal feasibility tolerance for reported optima.
pub const FEAS_TOL: f64 = 1e-7;
/// Optimality (reduced cost / multiplier sign) tolerance.
pub const OPT_TOL: f64 = 1e-7;
/// KKT residual bound for QP optima.
pub const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: DVector<f64>,
    pub rhs: f64,
}

/// Linear constraint set over `z ∈ ℝ^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub inequalities: Vec<Row>,
    pub equalities: Vec<Row>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Constraints {
    /// No rows, all variables free.
    pub fn free(n: usize) -> Self {
        Self {
            inequalities: Vec::new(),
            equalities: Vec::new(),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Adds `coeffs·z ≤ rhs`.
    pub fn leq(&mut self, coeffs: DVector<f64>, rhs: f64) -> &mut Self {
        self.inequalities.push(Row { coeffs, rhs });
        self
    }

    /// Adds `coeffs·z ≥ rhs`.
    pub fn geq(&mut self, coeffs: DVector<f64>, rhs: f64) -> &mut Self {
        self.inequalities.push(Row {
            coeffs: -coeffs,
            rhs: -rhs,
        });
        self
    }

    pub fn equal(&mut self, coeffs: DVector<f64>, rhs: f64) -> &mut Self {
        self.equalities.push(Row { coeffs, rhs });
        self
    }

    pub fn bound(&mut self, j: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[j] = lower;
        self.upper[j] = upper;
        self
    }

    /// Adds every row of `a z ≤ b`.
    pub fn leq_matrix(&mut self, a: &DMatrix<f64>, b: &DVector<f64>) -> &mut Self {
        for i in 0..a.nrows() {
            self.leq(a.row(i).transpose(), b[i]);
        }
        self
    }

    /// Largest violation of any row or bound at `z` (0 when feasible).
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.inequalities {
            worst = worst.max(r.coeffs.dot(z) - r.rhs);
        }
        for r in &self.equalities {
            worst = worst.max((r.coeffs.dot(z) - r.rhs).abs());
        }
        for j in 0..self.dim() {
            worst = worst.max(self.lower[j] - z[j]).max(z[j] - self.upper[j]);
        }
        worst
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let n = self.dim();
        if self.upper.len() != n {
            return Err(format!("bounds have lengths {} and {}", n, self.upper.len()));
        }
        for (kind, rows) in [("inequality", &self.inequalities), ("equality", &self.equalities)] {
            for (i, r) in rows.iter().enumerate() {
                if r.coeffs.len() != n {
                    return Err(format!("{kind} row {i} has {} coefficients, expected {n}", r.coeffs.len()));
                }
                if r.coeffs.iter().any(|c| !c.is_finite()) || !r.rhs.is_finite() {
                    return Err(format!("{kind} row {i} is not finite"));
                }
            }
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(format!("bound {j} is NaN"));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(format!("bound {j} excludes every real value"));
            }
        }
        Ok(())
    }

    pub(crate) fn bounds_consistent(&self) -> bool {
        (0..self.dim()).all(|j| self.lower[j] <= self.upper[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub sense: Objective,
    pub constraints: Constraints,
}

impl LinearProgram {
    pub fn new(objective: DVector<f64>, sense: Objective, constraints: Constraints) -> Self {
        Self {
            objective,
            sense,
            constraints,
        }
    }
}

/// `min ½ zᵀHz + qᵀz` subject to [`Constraints`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constraints: Constraints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration budget exhausted before optimality was certified.
    MaxIterations,
    /// Malformed input, singular linear algebra, or an "optimum" that failed
    /// the feasibility re-check.
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIterations => "iteration limit",
            SolveStatus::NumericalFailure => "numerical failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub solution: DVector<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
    /// Largest KKT residual (QP only).
    pub kkt_residual: Option<f64>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub(crate) fn failed(status: SolveStatus, n: usize, iterations: usize) -> Self {
        Self {
            status,
            solution: DVector::from_element(n, f64::NAN),
            objective: f64::NAN,
            max_violation: f64::NAN,
            iterations,
            kkt_residual: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_accounts_for_all_row_kinds() {
        let mut c = Constraints::free(2);
        c.leq(DVector::from_vec(vec![1.0, 0.0]), 1.0)
            .equal(DVector::from_vec(vec![0.0, 1.0]), 2.0)
            .bound(0, 0.0, 5.0);
        assert_eq!(c.max_violation(&DVector::from_vec(vec![0.5, 2.0])), 0.0);
        assert_eq!(c.max_violation(&DVector::from_vec(vec![1.5, 2.0])), 0.5);
        assert_eq!(c.max_violation(&DVector::from_vec(vec![0.5, 2.25])), 0.25);
        assert_eq!(c.max_violation(&DVector::from_vec(vec![-3.0, 2.0])), 3.0);
    }

    #[test]
    fn geq_is_stored_as_negated_leq() {
        let mut c = Constraints::free(1);
        c.geq(DVector::from_vec(vec![2.0]), 4.0);
        assert_eq!(c.inequalities[0].coeffs[0], -2.0);
        assert_eq!(c.inequalities[0].rhs, -4.0);
    }

    #[test]
    fn validate_catches_shape_errors() {
        let mut c = Constraints::free(2);
        c.leq(DVector::from_vec(vec![1.0]), 1.0);
        assert!(c.validate().is_err());
        let mut c = Constraints::free(1);
        c.leq(DVector::from_vec(vec![f64::NAN]), 1.0);
        assert!(c.validate().is_err());
    }
}
