//! Infinite-horizon LQR design via the discrete algebraic Riccati equation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::require_psd;

const FIXED_POINT_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 100_000;

/// Feedback gain and Riccati fixed point.
///
/// The gain is returned with the sign such that `u = K e` is the optimal
/// feedback directly; no caller-side negation is expected.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrDesign {
    pub k_gain: DMatrix<f64>,
    pub p_cost: DMatrix<f64>,
}

/// Solves the DARE `P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA` by fixed-point
/// iteration from `P = Q` and returns `K = -(R + B'PB)^-1 B'PA` with the
/// fixed point `P`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<LqrDesign> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if q.nrows() != n || q.ncols() != n || r.nrows() != m || r.ncols() != m {
        return Err(Error::Dimension("cost matrices mismatch system dimensions".into()));
    }
    require_psd(q, "Q")?;
    require_psd(r, "R")?;

    let a_t = a.transpose();
    let b_t = b.transpose();
    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for iteration in 0..MAX_ITERATIONS {
        let pb = &p * b;
        let gram = r + &b_t * &pb;
        let gain_part = gram
            .clone()
            .lu()
            .solve(&(pb.transpose() * a))
            .ok_or_else(|| Error::invalid("R", "R + B'PB is singular".to_string()))?;
        let next = q + &a_t * &p * a - a.transpose() * &pb * &gain_part;
        residual = (&next - &p).abs().max();
        p = next;
        if residual <= FIXED_POINT_TOL {
            let _ = iteration;
            let k_gain = -gram
                .lu()
                .solve(&(b_t * &p * a))
                .ok_or_else(|| Error::invalid("R", "R + B'PB is singular".to_string()))?;
            // symmetrize away iteration round-off
            p = (&p + p.transpose()) * 0.5;
            return Ok(LqrDesign { k_gain, p_cost: p });
        }
    }
    Err(Error::NonConvergent {
        residual,
        iterations: MAX_ITERATIONS,
    })
}

/// Residual of the DARE at `p` in the max norm; zero at the fixed point.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let pb = p * b;
    let gram = r + b.transpose() * &pb;
    let corr = a.transpose() * &pb * gram.lu().solve(&(pb.transpose() * a)).unwrap();
    let next = q + a.transpose() * p * a - corr;
    (next - p).abs().max()
}

/// Largest eigenvalue magnitude; adequate for the small matrices used here.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let eig = m.complex_eigenvalues();
    eig.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
