//! Two-phase bounded-variable primal simplex on a dense tableau.
//!
//! Every original variable is mapped to one or two standard columns with
//! bounds `0 ≤ y ≤ U` (`U` possibly infinite):
//!
//! - both bounds finite: `x = l + y`, `U = u - l`
//! - lower only: `x = l + y`
//! - upper only: `x = u - y`
//! - free: `x = y⁺ - y⁻`
//!
//! Inequality rows get a slack column. Rows whose right-hand side is negative
//! after the shift, and all equality rows, get an artificial column. Entering
//! and leaving choices follow Bland's smallest-index rule.

use nalgebra::DVector;

use super::{Constraints, LinearProgram, Objective, SolveResult, SolveStatus, FEAS_TOL};

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const RATIO_TIE: f64 = 1e-12;
const PHASE1_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct ColumnMap {
    var: usize,
    sign: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Structural,
    Slack,
    Artificial,
}

enum Stop {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    cols: usize,
    /// `B⁻¹A`, row-major.
    t: Vec<Vec<f64>>,
    /// Current values of the basic variables, by row.
    beta: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    ub: Vec<f64>,
    kind: Vec<ColumnKind>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    fn compute_reduced_costs(&mut self) {
        let mut d = self.cost.clone();
        for (r, row) in self.t.iter().enumerate() {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        self.reduced = d;
    }

    /// Artificials never re-enter once they leave the basis.
    fn enterable(&self, j: usize) -> bool {
        !self.is_basic[j] && self.kind[j] != ColumnKind::Artificial
    }

    fn run(&mut self, max_iter: usize) -> Stop {
        loop {
            if self.iterations >= max_iter {
                return Stop::IterationLimit;
            }
            let entering = (0..self.cols).find(|&j| {
                if !self.enterable(j) || self.ub[j] == 0.0 {
                    return false;
                }
                let d = self.reduced[j];
                if self.at_upper[j] {
                    d > COST_TOL
                } else {
                    d < -COST_TOL
                }
            });
            let Some(j) = entering else {
                return Stop::Optimal;
            };
            self.iterations += 1;
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

            let mut best_row: Option<usize> = None;
            let mut best_step = f64::INFINITY;
            let mut best_to_upper = false;
            for r in 0..self.t.len() {
                let alpha = self.t[r][j];
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = dir * alpha;
                let var = self.basis[r];
                let (limit, to_upper) = if rate > 0.0 {
                    (self.beta[r].max(0.0) / rate, false)
                } else if self.ub[var].is_finite() {
                    ((self.ub[var] - self.beta[r]).max(0.0) / -rate, true)
                } else {
                    continue;
                };
                let better = match best_row {
                    None => true,
                    Some(br) => {
                        limit < best_step - RATIO_TIE
                            || (limit <= best_step + RATIO_TIE && var < self.basis[br])
                    }
                };
                if better {
                    best_row = Some(r);
                    best_step = limit;
                    best_to_upper = to_upper;
                }
            }

            let flip = self.ub[j];
            if best_row.is_none() && !flip.is_finite() {
                return Stop::Unbounded;
            }
            if flip.is_finite() && (best_row.is_none() || flip <= best_step) {
                for r in 0..self.t.len() {
                    self.beta[r] -= dir * self.t[r][j] * flip;
                }
                self.at_upper[j] = !self.at_upper[j];
                continue;
            }

            let pr = best_row.expect("checked above");
            let step = best_step;
            for r in 0..self.t.len() {
                self.beta[r] -= dir * self.t[r][j] * step;
            }
            let leaving = self.basis[pr];
            self.is_basic[leaving] = false;
            self.at_upper[leaving] = best_to_upper;
            self.beta[pr] = if dir > 0.0 { step } else { self.ub[j] - step };
            self.pivot(pr, j);
            self.basis[pr] = j;
            self.is_basic[j] = true;
            self.at_upper[j] = false;
        }
    }

    fn pivot(&mut self, pr: usize, j: usize) {
        let piv = self.t[pr][j];
        for a in self.t[pr].iter_mut() {
            *a /= piv;
        }
        let pivot_row = self.t[pr].clone();
        for (r, row) in self.t.iter_mut().enumerate() {
            if r == pr {
                continue;
            }
            let factor = row[j];
            if factor != 0.0 {
                for (a, p) in row.iter_mut().zip(&pivot_row) {
                    *a -= factor * p;
                }
                row[j] = 0.0;
            }
        }
        let dj = self.reduced[j];
        if dj != 0.0 {
            for (d, p) in self.reduced.iter_mut().zip(&pivot_row) {
                *d -= dj * p;
            }
            self.reduced[j] = 0.0;
        }
    }

    fn value(&self, col: usize, row_of: &[Option<usize>]) -> f64 {
        match row_of[col] {
            Some(r) => self.beta[r],
            None if self.at_upper[col] => self.ub[col],
            None => 0.0,
        }
    }
}

/// Solves `lp`. Status `Optimal` is only reported after the recovered point
/// passes a feasibility re-check at [`FEAS_TOL`].
pub fn solve_lp(lp: &LinearProgram) -> SolveResult {
    let cons = &lp.constraints;
    let n = cons.dim();
    if lp.objective.len() != n || cons.validate().is_err() {
        return SolveResult::failed(SolveStatus::NumericalFailure, n, 0);
    }
    if !cons.bounds_consistent() {
        return SolveResult::failed(SolveStatus::Infeasible, n, 0);
    }

    // column layout and variable offsets
    let mut offset = vec![0.0; n];
    let mut columns: Vec<ColumnMap> = Vec::new();
    let mut ub: Vec<f64> = Vec::new();
    for j in 0..n {
        let (l, u) = (cons.lower[j], cons.upper[j]);
        match (l.is_finite(), u.is_finite()) {
            (true, _) => {
                offset[j] = l;
                columns.push(ColumnMap { var: j, sign: 1.0 });
                ub.push(if u.is_finite() { u - l } else { f64::INFINITY });
            }
            (false, true) => {
                offset[j] = u;
                columns.push(ColumnMap { var: j, sign: -1.0 });
                ub.push(f64::INFINITY);
            }
            (false, false) => {
                columns.push(ColumnMap { var: j, sign: 1.0 });
                columns.push(ColumnMap { var: j, sign: -1.0 });
                ub.push(f64::INFINITY);
                ub.push(f64::INFINITY);
            }
        }
    }
    let n_struct = columns.len();
    let offset = DVector::from_vec(offset);

    let rows: Vec<(&DVector<f64>, f64, bool)> = cons
        .inequalities
        .iter()
        .map(|r| (&r.coeffs, r.rhs, true))
        .chain(cons.equalities.iter().map(|r| (&r.coeffs, r.rhs, false)))
        .collect();
    let n_rows = rows.len();
    let n_slack = cons.inequalities.len();

    // decide which rows need an artificial
    let mut shifted: Vec<f64> = Vec::with_capacity(n_rows);
    let mut needs_art: Vec<bool> = Vec::with_capacity(n_rows);
    for (coeffs, rhs, is_ineq) in &rows {
        let r = rhs - coeffs.dot(&offset);
        shifted.push(r);
        needs_art.push(!(*is_ineq && r >= 0.0));
    }
    let n_art = needs_art.iter().filter(|&&b| b).count();
    let cols = n_struct + n_slack + n_art;

    let mut kind = vec![ColumnKind::Structural; n_struct];
    kind.extend(std::iter::repeat(ColumnKind::Slack).take(n_slack));
    kind.extend(std::iter::repeat(ColumnKind::Artificial).take(n_art));
    ub.extend(std::iter::repeat(f64::INFINITY).take(n_slack + n_art));

    let mut t = vec![vec![0.0; cols]; n_rows];
    let mut beta = vec![0.0; n_rows];
    let mut basis = vec![0usize; n_rows];
    let mut art = n_struct + n_slack;
    for (r, (coeffs, _, is_ineq)) in rows.iter().enumerate() {
        let row = &mut t[r];
        for (c, map) in columns.iter().enumerate() {
            row[c] = map.sign * coeffs[map.var];
        }
        if *is_ineq {
            row[n_struct + r] = 1.0;
        }
        let mut rhs = shifted[r];
        if needs_art[r] {
            if rhs < 0.0 {
                for a in row.iter_mut() {
                    *a = -*a;
                }
                rhs = -rhs;
            }
            row[art] = 1.0;
            basis[r] = art;
            art += 1;
        } else {
            basis[r] = n_struct + r;
        }
        beta[r] = rhs;
    }
    let mut is_basic = vec![false; cols];
    for &b in &basis {
        is_basic[b] = true;
    }

    let mut tab = Tableau {
        cols,
        t,
        beta,
        basis,
        is_basic,
        at_upper: vec![false; cols],
        ub,
        kind,
        cost: vec![0.0; cols],
        reduced: vec![0.0; cols],
        iterations: 0,
    };
    let max_iter = 200 * (n_rows + cols) + 1000;

    if n_art > 0 {
        for c in (n_struct + n_slack)..cols {
            tab.cost[c] = 1.0;
        }
        tab.compute_reduced_costs();
        match tab.run(max_iter) {
            Stop::Optimal => {}
            Stop::IterationLimit => return SolveResult::failed(SolveStatus::MaxIterations, n, tab.iterations),
            // phase 1 is bounded below by 0
            Stop::Unbounded => return SolveResult::failed(SolveStatus::NumericalFailure, n, tab.iterations),
        }
        let scale = 1.0 + shifted.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let infeas: f64 = (0..n_rows)
            .filter(|&r| tab.kind[tab.basis[r]] == ColumnKind::Artificial)
            .map(|r| tab.beta[r].abs())
            .sum();
        if infeas > PHASE1_TOL * scale {
            return SolveResult::failed(SolveStatus::Infeasible, n, tab.iterations);
        }
        for c in (n_struct + n_slack)..cols {
            tab.ub[c] = 0.0;
            tab.cost[c] = 0.0;
        }
    }

    let sign = match lp.sense {
        Objective::Minimize => 1.0,
        Objective::Maximize => -1.0,
    };
    for (c, map) in columns.iter().enumerate() {
        tab.cost[c] = sign * map.sign * lp.objective[map.var];
    }
    tab.compute_reduced_costs();
    match tab.run(max_iter) {
        Stop::Optimal => {}
        Stop::Unbounded => return SolveResult::failed(SolveStatus::Unbounded, n, tab.iterations),
        Stop::IterationLimit => return SolveResult::failed(SolveStatus::MaxIterations, n, tab.iterations),
    }

    let mut row_of = vec![None; cols];
    for (r, &b) in tab.basis.iter().enumerate() {
        row_of[b] = Some(r);
    }
    let mut z = offset;
    for (c, map) in columns.iter().enumerate() {
        z[map.var] += map.sign * tab.value(c, &row_of);
    }
    finish(lp, cons, z, tab.iterations)
}

fn finish(lp: &LinearProgram, cons: &Constraints, z: DVector<f64>, iterations: usize) -> SolveResult {
    let violation = cons.max_violation(&z);
    let status = if violation <= FEAS_TOL && z.iter().all(|v| v.is_finite()) {
        SolveStatus::Optimal
    } else {
        SolveStatus::NumericalFailure
    };
    SolveResult {
        status,
        objective: lp.objective.dot(&z),
        solution: z,
        max_violation: violation,
        iterations,
        kkt_residual: None,
    }
}
