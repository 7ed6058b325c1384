//! Primal active-set method for convex QPs.
//!
//! A feasible start comes from a phase-1 LP solved with the simplex code.
//! Each iteration solves the equality-constrained subproblem on the working
//! set through a dense KKT system. Blocking constraints join the working set;
//! the inequality with the most negative multiplier leaves it (ties: lowest
//! index).

use nalgebra::{DMatrix, DVector};

use super::{
    solve_lp, Constraints, LinearProgram, Objective, QuadraticProgram, SolveResult, SolveStatus,
    FEAS_TOL, KKT_TOL, OPT_TOL,
};

const STEP_TOL: f64 = 1e-12;
const MAX_ITER: usize = 500;

/// Inequality rows plus finite bounds, all as `g·z ≤ h`.
fn inequality_rows(cons: &Constraints) -> Vec<(DVector<f64>, f64)> {
    let n = cons.dim();
    let mut rows: Vec<(DVector<f64>, f64)> =
        cons.inequalities.iter().map(|r| (r.coeffs.clone(), r.rhs)).collect();
    for j in 0..n {
        if cons.upper[j].is_finite() {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            rows.push((e, cons.upper[j]));
        }
        if cons.lower[j].is_finite() {
            let mut e = DVector::zeros(n);
            e[j] = -1.0;
            rows.push((e, -cons.lower[j]));
        }
    }
    rows
}

pub fn solve_qp(qp: &QuadraticProgram) -> SolveResult {
    let cons = &qp.constraints;
    let n = cons.dim();
    if qp.hessian.shape() != (n, n) || qp.linear.len() != n || cons.validate().is_err() {
        return SolveResult::failed(SolveStatus::NumericalFailure, n, 0);
    }
    let h = &qp.hessian;
    if (h - h.transpose()).amax() > 1e-12 * (1.0 + h.amax()) {
        return SolveResult::failed(SolveStatus::NumericalFailure, n, 0);
    }

    let phase1 = solve_lp(&LinearProgram::new(DVector::zeros(n), Objective::Minimize, cons.clone()));
    match phase1.status {
        SolveStatus::Optimal => {}
        SolveStatus::Unbounded => return SolveResult::failed(SolveStatus::NumericalFailure, n, 0),
        other => return SolveResult::failed(other, n, phase1.iterations),
    }
    let mut z = phase1.solution;

    let ineq = inequality_rows(cons);
    let eq: Vec<(DVector<f64>, f64)> = cons.equalities.iter().map(|r| (r.coeffs.clone(), r.rhs)).collect();
    let mut working: Vec<usize> = Vec::new();
    let mut iterations = 0;

    loop {
        if iterations >= MAX_ITER {
            return SolveResult::failed(SolveStatus::MaxIterations, n, iterations);
        }
        iterations += 1;

        let grad = h * &z + &qp.linear;
        let Some((step, multipliers)) = kkt_step(h, &grad, &eq, &ineq, &working) else {
            return SolveResult::failed(SolveStatus::NumericalFailure, n, iterations);
        };

        if step.amax() <= STEP_TOL * (1.0 + z.amax()) {
            let ineq_mult = &multipliers[eq.len()..];
            let mut drop_pos = None;
            let mut most_negative = -OPT_TOL;
            // strict comparison keeps the lowest index on ties
            for (k, &lam) in ineq_mult.iter().enumerate() {
                if lam < most_negative {
                    most_negative = lam;
                    drop_pos = Some(k);
                }
            }
            match drop_pos {
                None => return finish(qp, &ineq, &eq, z, &working, &multipliers, iterations),
                Some(k) => {
                    working.remove(k);
                    continue;
                }
            }
        }

        // ratio test over inequalities outside the working set
        let mut alpha = 1.0;
        let mut blocking: Option<usize> = None;
        for (k, (g, rhs)) in ineq.iter().enumerate() {
            if working.contains(&k) {
                continue;
            }
            let gp = g.dot(&step);
            if gp <= STEP_TOL {
                continue;
            }
            let slack = (rhs - g.dot(&z)).max(0.0);
            let ratio = slack / gp;
            if ratio < alpha {
                alpha = ratio;
                blocking = Some(k);
            }
        }
        z += &step * alpha;
        if let Some(k) = blocking {
            working.push(k);
            working.sort_unstable();
        }
    }
}

/// Solves `[H Cᵀ; C 0][p; ν] = [-grad; 0]` with `C` = equalities followed by
/// the working inequalities. Returns the step and the multipliers in that
/// row order.
fn kkt_step(
    h: &DMatrix<f64>,
    grad: &DVector<f64>,
    eq: &[(DVector<f64>, f64)],
    ineq: &[(DVector<f64>, f64)],
    working: &[usize],
) -> Option<(DVector<f64>, Vec<f64>)> {
    let n = h.nrows();
    let rows: Vec<&DVector<f64>> = eq
        .iter()
        .map(|(g, _)| g)
        .chain(working.iter().map(|&k| &ineq[k].0))
        .collect();
    let k = rows.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (i, g) in rows.iter().enumerate() {
        for j in 0..n {
            kkt[(n + i, j)] = g[j];
            kkt[(j, n + i)] = g[j];
        }
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    let sol = kkt.full_piv_lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let step = sol.rows(0, n).into_owned();
    let mult = sol.rows(n, k).iter().copied().collect();
    Some((step, mult))
}

fn finish(
    qp: &QuadraticProgram,
    ineq: &[(DVector<f64>, f64)],
    eq: &[(DVector<f64>, f64)],
    z: DVector<f64>,
    working: &[usize],
    multipliers: &[f64],
    iterations: usize,
) -> SolveResult {
    let violation = qp.constraints.max_violation(&z);
    let mut stationarity = &qp.hessian * &z + &qp.linear;
    for (i, (g, _)) in eq.iter().enumerate() {
        stationarity += g * multipliers[i];
    }
    let mut dual_infeas: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for (pos, &k) in working.iter().enumerate() {
        let lam = multipliers[eq.len() + pos];
        let (g, rhs) = &ineq[k];
        stationarity += g * lam;
        dual_infeas = dual_infeas.max(-lam);
        complementarity = complementarity.max((lam * (rhs - g.dot(&z))).abs());
    }
    let kkt = stationarity.amax().max(violation).max(dual_infeas).max(complementarity);
    let status = if violation <= FEAS_TOL && kkt <= KKT_TOL && z.iter().all(|v| v.is_finite()) {
        SolveStatus::Optimal
    } else {
        SolveStatus::NumericalFailure
    };
    SolveResult {
        status,
        objective: 0.5 * z.dot(&(&qp.hessian * &z)) + qp.linear.dot(&z),
        solution: z,
        max_violation: violation,
        iterations,
        kkt_residual: Some(kkt),
    }
}
