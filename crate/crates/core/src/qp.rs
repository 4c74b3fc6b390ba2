//! Dense convex quadratic programs over the nominal input sequence.
//!
//! Problems take the form `min 0.5 x'Hx + f'x` subject to `G x + g <= 0`.
//! The solver first looks for a feasible point (Gauss-Newton on the squared
//! constraint violations), declaring infeasibility when the best attainable
//! violation stays at or above `1e-8`, then runs a primal active-set
//! iteration driven by the signs of the working-set multipliers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{min_symmetric_eigenvalue, symmetry_defect, LinearSystem, StackedPrediction};
use crate::scenario::ReducedConstraints;

const HESSIAN_SYMMETRY_TOL: f64 = 1e-12;
const HESSIAN_EIG_FLOOR: f64 = -1e-10;
const REGULARIZATION_FLOOR: f64 = 1e-10;
const INFEASIBILITY_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-11;
const DUAL_TOL: f64 = 1e-11;
const MAX_ITERATIONS: usize = 10_000;
/// Active constraints are nudged to sit at \u{2264} -1e-12 so trajectories that
/// ride the safe-set boundary remain numerically inside it.
const BOUNDARY_PUSH: f64 = 1e-12;

/// `min 0.5 x' hess x + lin' x` subject to `g_ineq x + h_ineq <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    hess: DMatrix<f64>,
    lin: DVector<f64>,
    g_ineq: DMatrix<f64>,
    h_ineq: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        hess: DMatrix<f64>,
        lin: DVector<f64>,
        g_ineq: DMatrix<f64>,
        h_ineq: DVector<f64>,
    ) -> Result<Self> {
        let d = hess.nrows();
        if hess.ncols() != d || lin.len() != d {
            return Err(Error::Dimension("objective dimensions are inconsistent".into()));
        }
        if g_ineq.nrows() != h_ineq.len() || (g_ineq.nrows() > 0 && g_ineq.ncols() != d) {
            return Err(Error::Dimension("constraint dimensions are inconsistent".into()));
        }
        if symmetry_defect(&hess) > HESSIAN_SYMMETRY_TOL {
            return Err(Error::NotSymmetric {
                name: "hess",
                tol: HESSIAN_SYMMETRY_TOL,
            });
        }
        if d > 0 {
            let lambda_min = min_symmetric_eigenvalue(&hess);
            if lambda_min < HESSIAN_EIG_FLOOR {
                return Err(Error::NotPsd {
                    name: "hess",
                    eigenvalue: lambda_min,
                });
            }
        }
        Ok(QpProblem {
            hess,
            lin,
            g_ineq,
            h_ineq,
        })
    }

    pub fn dim(&self) -> usize {
        self.hess.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.g_ineq.nrows()
    }

    pub fn hess(&self) -> &DMatrix<f64> {
        &self.hess
    }

    pub fn lin(&self) -> &DVector<f64> {
        &self.lin
    }

    pub fn g_ineq(&self) -> &DMatrix<f64> {
        &self.g_ineq
    }

    pub fn h_ineq(&self) -> &DVector<f64> {
        &self.h_ineq
    }

    /// Objective value `0.5 x'Hx + f'x`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.hess * x)[(0, 0)] + self.lin.dot(x)
    }

    /// Constraint residuals `Gx + g`.
    pub fn constraint_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.n_constraints() == 0 {
            DVector::zeros(0)
        } else {
            &self.g_ineq * x + &self.h_ineq
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "maxiter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub duals: DVector<f64>,
    pub status: QpStatus,
    pub kkt_stationarity: f64,
    pub kkt_complementarity: f64,
    pub primal_violation: f64,
}

/// Builds the condensed QP over the stacked nominal inputs.
///
/// The decision vector is the input sequence over the remaining horizon.
/// Stage costs apply `q_cost` to each intermediate predicted state and
/// `q_term` to the final one; the constant contribution of the current
/// state is dropped. The reduced scenario offsets enter as
/// `i_max + c_blk (phi s_k + gamma u) <= 0`.
pub fn assemble(
    sys: &LinearSystem,
    q_cost: &DMatrix<f64>,
    r_cost: &DMatrix<f64>,
    q_term: &DMatrix<f64>,
    pred: &StackedPrediction,
    s_k: &DVector<f64>,
    red: &ReducedConstraints,
) -> Result<QpProblem> {
    let (n, m, h) = (sys.n(), sys.m(), pred.horizon);
    if q_cost.nrows() != n || q_cost.ncols() != n || q_term.nrows() != n || q_term.ncols() != n {
        return Err(Error::Dimension("state cost matrices must be n x n".into()));
    }
    if r_cost.nrows() != m || r_cost.ncols() != m {
        return Err(Error::Dimension("input cost matrix must be m x m".into()));
    }
    if s_k.len() != n {
        return Err(Error::Dimension("current state has wrong dimension".into()));
    }
    if red.i_max().len() != pred.c_blk.nrows() {
        return Err(Error::Dimension(
            "reduced constraints do not match the stacked safe set".into(),
        ));
    }

    // Q-bar = diag(Q, ..., Q, Q_term) over the stacked predicted states.
    let mut q_bar = DMatrix::zeros(h * n, h * n);
    for t in 0..h - 1 {
        q_bar.view_mut((t * n, t * n), (n, n)).copy_from(q_cost);
    }
    q_bar
        .view_mut(((h - 1) * n, (h - 1) * n), (n, n))
        .copy_from(q_term);

    let q_gamma = &q_bar * &pred.gamma;
    let mut hess = pred.gamma.transpose() * &q_gamma;
    for t in 0..h {
        let mut block = hess.view_mut((t * m, t * m), (m, m));
        block += r_cost;
    }
    hess *= 2.0;
    // enforce exact symmetry against accumulation order
    hess = (&hess + hess.transpose()) * 0.5;

    let phi_s = &pred.phi * s_k;
    let lin = 2.0 * (q_gamma.transpose() * &phi_s);

    let g_ineq = &pred.c_blk * &pred.gamma;
    let h_ineq = red.i_max() + &pred.c_blk * &phi_s;

    QpProblem::new(hess, lin, g_ineq, h_ineq)
}

/// Solves the QP. `Optimal` carries KKT residuals within tolerance;
/// `Infeasible` is declared when the feasibility phase bottoms out with a
/// violation of at least `1e-8`; `MaxIter` signals numerical trouble and is
/// treated like infeasibility by callers that have a fallback.
pub fn solve(prob: &QpProblem) -> QpSolution {
    let d = prob.dim();
    let p = prob.n_constraints();

    // Regularization floor keeps the Newton systems well posed.
    let mut hess = prob.hess.clone();
    if d > 0 {
        let lambda_min = min_symmetric_eigenvalue(&hess);
        if lambda_min < REGULARIZATION_FLOOR {
            let shift = REGULARIZATION_FLOOR - lambda_min;
            for i in 0..d {
                hess[(i, i)] += shift;
            }
        }
    }

    let unconstrained = solve_spd(&hess, &(-&prob.lin));

    if p == 0 {
        return finish(prob, unconstrained, DVector::zeros(0), QpStatus::Optimal);
    }

    // Phase 1: feasible start or infeasibility certificate.
    let mut x = unconstrained;
    let mut residual = prob.constraint_residual(&x);
    if residual.max() > 0.0 {
        x = restore_feasibility(prob, x);
        residual = prob.constraint_residual(&x);
        if residual.max() >= INFEASIBILITY_TOL {
            return finish(prob, x, DVector::zeros(p), QpStatus::Infeasible);
        }
    }

    // Phase 2: primal active set.
    let mut working: Vec<usize> = Vec::new();
    {
        // seed with active rows, keeping them linearly independent
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|a, b| residual[*b].partial_cmp(&residual[*a]).unwrap());
        for i in order {
            if residual[i] > -1e-9 && working.len() < d {
                working.push(i);
                if !rows_independent(&prob.g_ineq, &working) {
                    working.pop();
                }
            }
        }
    }

    let mut duals = DVector::zeros(p);
    for _ in 0..MAX_ITERATIONS {
        let nw = working.len();
        let (step, lam) = solve_eqp(&hess, prob, &x, &working);

        if step.amax() < STEP_TOL {
            let min_lambda = lam.min();
            if nw == 0 || min_lambda >= -DUAL_TOL {
                duals.fill(0.0);
                for (slot, &row) in working.iter().enumerate() {
                    duals[row] = lam[slot].max(0.0);
                }
                return finish(prob, x, duals, QpStatus::Optimal);
            }
            let drop = lam.imin();
            working.remove(drop);
        } else {
            // largest step to the nearest blocking constraint
            let g_step = &prob.g_ineq * &step;
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..p {
                if working.contains(&i) || g_step[i] <= 1e-13 {
                    continue;
                }
                let r = prob.g_ineq.row(i).transpose().dot(&x) + prob.h_ineq[i];
                let a = (-r / g_step[i]).max(0.0);
                if a < alpha {
                    alpha = a;
                    blocking = Some(i);
                }
            }
            x += alpha * &step;
            if let Some(i) = blocking {
                working.push(i);
                if !rows_independent(&prob.g_ineq, &working) {
                    working.pop();
                }
            }
        }
    }
    finish(prob, x, duals, QpStatus::MaxIter)
}

/// Equality-constrained subproblem: minimize the quadratic model from `x`
/// while holding the working rows at zero residual. Returns the step and
/// the working-set multipliers.
fn solve_eqp(
    hess: &DMatrix<f64>,
    prob: &QpProblem,
    x: &DVector<f64>,
    working: &[usize],
) -> (DVector<f64>, DVector<f64>) {
    let d = prob.dim();
    let nw = working.len();
    let mut kkt = DMatrix::zeros(d + nw, d + nw);
    kkt.view_mut((0, 0), (d, d)).copy_from(hess);
    for (slot, &row) in working.iter().enumerate() {
        for j in 0..d {
            kkt[(d + slot, j)] = prob.g_ineq[(row, j)];
            kkt[(j, d + slot)] = prob.g_ineq[(row, j)];
        }
    }
    let mut rhs = DVector::zeros(d + nw);
    let grad = hess * x + &prob.lin;
    for i in 0..d {
        rhs[i] = -grad[i];
    }
    for (slot, &row) in working.iter().enumerate() {
        rhs[d + slot] = -(prob.g_ineq.row(row).transpose().dot(x) + prob.h_ineq[row]);
    }
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => kkt
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(d + nw)),
    };
    (
        sol.rows(0, d).clone_owned(),
        sol.rows(d, nw).clone_owned(),
    )
}

/// Gauss-Newton descent on `0.5 * || max(Gx + g, 0) ||^2`.
fn restore_feasibility(prob: &QpProblem, start: DVector<f64>) -> DVector<f64> {
    let d = prob.dim();
    let violation = |x: &DVector<f64>| -> f64 {
        prob.constraint_residual(x)
            .iter()
            .map(|r| r.max(0.0).powi(2))
            .sum::<f64>()
            * 0.5
    };
    let mut x = start;
    for _ in 0..200 {
        let residual = prob.constraint_residual(&x);
        let active: Vec<usize> = (0..residual.len()).filter(|i| residual[*i] > 0.0).collect();
        if active.is_empty() {
            break;
        }
        let mut gram = DMatrix::zeros(d, d);
        let mut grad = DVector::zeros(d);
        for &i in &active {
            let row = prob.g_ineq.row(i);
            for a in 0..d {
                grad[a] += row[a] * residual[i];
                for b in 0..d {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        for i in 0..d {
            gram[(i, i)] += 1e-12;
        }
        let step = solve_spd(&gram, &(-&grad));
        let v0 = violation(&x);
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-14 {
            let candidate = &x + alpha * &step;
            if violation(&candidate) < v0 + 1e-4 * alpha * slope {
                x = candidate;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved || (alpha * step.amax()) < 1e-15 {
            break;
        }
    }
    x
}

fn rows_independent(g: &DMatrix<f64>, rows: &[usize]) -> bool {
    if rows.is_empty() {
        return true;
    }
    if rows.len() > g.ncols() {
        return false;
    }
    let mut sub = DMatrix::zeros(rows.len(), g.ncols());
    for (slot, &row) in rows.iter().enumerate() {
        sub.row_mut(slot).copy_from(&g.row(row));
    }
    let scale = sub.amax().max(1.0);
    sub.svd(false, false)
        .singular_values
        .iter()
        .all(|s| *s > 1e-11 * scale)
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if let Some(chol) = m.clone().cholesky() {
        return chol.solve(rhs);
    }
    match m.clone().lu().solve(rhs) {
        Some(s) => s,
        None => m
            .clone()
            .svd(true, true)
            .solve(rhs, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(rhs.len())),
    }
}

/// Final bookkeeping: nudge active rows strictly inside the boundary, then
/// report KKT residuals against the original (unregularized) problem.
fn finish(prob: &QpProblem, mut x: DVector<f64>, duals: DVector<f64>, status: QpStatus) -> QpSolution {
    if status == QpStatus::Optimal && prob.n_constraints() > 0 {
        for _ in 0..2 {
            let residual = prob.constraint_residual(&x);
            let push: Vec<usize> = (0..residual.len())
                .filter(|i| residual[*i] > -BOUNDARY_PUSH)
                .collect();
            if push.is_empty() {
                break;
            }
            let mut g_push = DMatrix::zeros(push.len(), prob.dim());
            let mut target = DVector::zeros(push.len());
            for (slot, &i) in push.iter().enumerate() {
                g_push.row_mut(slot).copy_from(&prob.g_ineq.row(i));
                target[slot] = -BOUNDARY_PUSH - residual[i];
            }
            // least-norm correction G dx = target
            let gram = &g_push * g_push.transpose();
            let y = match gram.clone().cholesky() {
                Some(c) => c.solve(&target),
                None => gram
                    .svd(true, true)
                    .solve(&target, 1e-14)
                    .unwrap_or_else(|_| DVector::zeros(target.len())),
            };
            x += g_push.transpose() * y;
        }
    }

    let residual = prob.constraint_residual(&x);
    let primal_violation = residual.iter().fold(0.0f64, |acc, r| acc.max(*r));
    let stationarity = if prob.dim() == 0 {
        0.0
    } else {
        let mut grad = &prob.hess * &x + &prob.lin;
        if prob.n_constraints() > 0 {
            grad += prob.g_ineq.transpose() * &duals;
        }
        grad.amax()
    };
    let complementarity = residual
        .iter()
        .zip(duals.iter())
        .fold(0.0f64, |acc, (r, l)| acc.max((r * l).abs()));

    QpSolution {
        x,
        duals,
        status,
        kkt_stationarity: stationarity,
        kkt_complementarity: complementarity,
        primal_violation,
    }
}
