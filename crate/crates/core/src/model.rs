//! Linear stochastic dynamics, polytopic safe set, and condensed
//! prediction matrices.
//!
//! The state evolves as `s+ = A s + B u + w` with zero-mean disturbance
//! `w ~ (0, sigma_w)`. Safety is membership in the closed polytope
//! `{ s | C s + c <= 0 }`; boundary states count as safe. Over a horizon
//! `h` the nominal and error dynamics condense into stacked matrices so
//! a whole trajectory becomes one affine expression of the input sequence.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const EIGENVALUE_FLOOR: f64 = -1e-10;

/// Checks symmetry to `tol` (max abs difference against the transpose).
pub(crate) fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn require_psd(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "`{name}` must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if symmetry_defect(m) > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            name,
            tol: SYMMETRY_TOL,
        });
    }
    let lambda_min = min_symmetric_eigenvalue(m);
    if lambda_min < EIGENVALUE_FLOOR {
        return Err(Error::NotPsd {
            name,
            eigenvalue: lambda_min,
        });
    }
    Ok(())
}

/// Discrete-time linear system `s+ = A s + B u + w`, `w ~ (0, sigma_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    sigma_w: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sigma_w: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "`A` must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "`B` has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if b.ncols() == 0 || n == 0 {
            return Err(Error::Dimension("state and input dimensions must be positive".into()));
        }
        if sigma_w.nrows() != n || sigma_w.ncols() != n {
            return Err(Error::Dimension(format!(
                "`sigma_w` is {}x{}, expected {n}x{n}",
                sigma_w.nrows(),
                sigma_w.ncols()
            )));
        }
        require_psd(&sigma_w, "sigma_w")?;
        Ok(LinearSystem { a, b, sigma_w })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn sigma_w(&self) -> &DMatrix<f64> {
        &self.sigma_w
    }

    /// Closed-loop matrix `A + B K` for a feedback gain `K` (m x n).
    pub fn closed_loop(&self, k_gain: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(
            (k_gain.nrows(), k_gain.ncols()),
            (self.m(), self.n()),
            "feedback gain must be {}x{}",
            self.m(),
            self.n()
        );
        &self.a + &self.b * k_gain
    }

    /// Rolls the nominal recursion forward: returns the states after each
    /// input, i.e. the sequence following the start state (same length as
    /// `inputs`).
    pub fn nominal_rollout(&self, start: &DVector<f64>, inputs: &[DVector<f64>]) -> Vec<DVector<f64>> {
        assert_eq!(start.len(), self.n(), "start state has wrong dimension");
        let mut out = Vec::with_capacity(inputs.len());
        let mut s = start.clone();
        for u in inputs {
            assert_eq!(u.len(), self.m(), "input has wrong dimension");
            s = &self.a * &s + &self.b * u;
            out.push(s.clone());
        }
        out
    }
}

/// Polytopic safe set `{ s | C s + c <= 0 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    c_mat: DMatrix<f64>,
    c_off: DVector<f64>,
}

impl Polytope {
    pub fn new(c_mat: DMatrix<f64>, c_off: DVector<f64>) -> Result<Self> {
        if c_mat.nrows() != c_off.len() {
            return Err(Error::Dimension(format!(
                "`C` has {} rows but `c` has {} entries",
                c_mat.nrows(),
                c_off.len()
            )));
        }
        if c_mat.nrows() == 0 {
            return Err(Error::Dimension("safe set needs at least one row".into()));
        }
        for i in 0..c_mat.nrows() {
            if c_mat.row(i).iter().all(|v| *v == 0.0) {
                return Err(Error::invalid("C", format!("row {i} is all zero")));
            }
        }
        Ok(Polytope { c_mat, c_off })
    }

    pub fn dim(&self) -> usize {
        self.c_mat.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.c_mat.nrows()
    }

    pub fn c_mat(&self) -> &DMatrix<f64> {
        &self.c_mat
    }

    pub fn c_off(&self) -> &DVector<f64> {
        &self.c_off
    }

    /// Row residuals `C s + c`; the state is safe iff none is positive.
    pub fn residual(&self, s: &DVector<f64>) -> DVector<f64> {
        assert_eq!(s.len(), self.dim(), "state has wrong dimension");
        &self.c_mat * s + &self.c_off
    }

    /// Membership test; the boundary counts as inside.
    pub fn contains(&self, s: &DVector<f64>) -> bool {
        assert_eq!(s.len(), self.dim(), "state has wrong dimension");
        for i in 0..self.c_mat.nrows() {
            let mut r = self.c_off[i];
            for j in 0..self.c_mat.ncols() {
                r += self.c_mat[(i, j)] * s[j];
            }
            if r > 0.0 {
                return false;
            }
        }
        true
    }
}

/// Condensed prediction matrices over a horizon `h`.
///
/// With stacked inputs `u` and stacked disturbances `w`, the nominal
/// trajectory after the current state is `phi * s + gamma * u` and the
/// error trajectory is `a_err * w`. `c_blk` and `c_stack` repeat the safe
/// set blockwise so `c_blk * x + c_stack <= 0` means every stacked state
/// of `x` is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedPrediction {
    pub phi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub a_err: DMatrix<f64>,
    pub c_blk: DMatrix<f64>,
    pub c_stack: DVector<f64>,
    pub horizon: usize,
    n: usize,
    m: usize,
    n_c: usize,
}

impl StackedPrediction {
    /// Condenses the nominal, error, and safe-set blocks for horizon `h`.
    ///
    /// Block row `j` (0-based) of `a_err` holds `(A + B K)^(j - i)` at block
    /// column `i <= j`: the error after `j + 1` steps is the disturbance
    /// history filtered through powers of the closed loop, with an identity
    /// block for the most recent disturbance.
    pub fn build(
        sys: &LinearSystem,
        k_gain: &DMatrix<f64>,
        poly: &Polytope,
        h: usize,
    ) -> Result<Self> {
        if h == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        let (n, m) = (sys.n(), sys.m());
        if poly.dim() != n {
            return Err(Error::Dimension(format!(
                "safe set dimension {} does not match state dimension {n}",
                poly.dim()
            )));
        }
        let a_cl = sys.closed_loop(k_gain);
        let n_c = poly.n_rows();

        // Powers A^0..A^h and (A+BK)^0..(A+BK)^(h-1).
        let mut a_pow = Vec::with_capacity(h + 1);
        a_pow.push(DMatrix::identity(n, n));
        for p in 0..h {
            let next = sys.a() * &a_pow[p];
            a_pow.push(next);
        }
        let mut cl_pow = Vec::with_capacity(h);
        cl_pow.push(DMatrix::identity(n, n));
        for p in 0..h.saturating_sub(1) {
            let next = &a_cl * &cl_pow[p];
            cl_pow.push(next);
        }

        let mut phi = DMatrix::zeros(h * n, n);
        let mut gamma = DMatrix::zeros(h * n, h * m);
        let mut a_err = DMatrix::zeros(h * n, h * n);
        let mut c_blk = DMatrix::zeros(h * n_c, h * n);
        let mut c_stack = DVector::zeros(h * n_c);

        for j in 0..h {
            phi.view_mut((j * n, 0), (n, n)).copy_from(&a_pow[j + 1]);
            for i in 0..=j {
                gamma
                    .view_mut((j * n, i * m), (n, m))
                    .copy_from(&(&a_pow[j - i] * sys.b()));
                a_err
                    .view_mut((j * n, i * n), (n, n))
                    .copy_from(&cl_pow[j - i]);
            }
            c_blk
                .view_mut((j * n_c, j * n), (n_c, n))
                .copy_from(poly.c_mat());
            c_stack.rows_mut(j * n_c, n_c).copy_from(poly.c_off());
        }

        Ok(StackedPrediction {
            phi,
            gamma,
            a_err,
            c_blk,
            c_stack,
            horizon: h,
            n,
            m,
            n_c,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn rows_per_step(&self) -> usize {
        self.n_c
    }

    /// Stacked nominal trajectory `phi * s + gamma * u`.
    pub fn stacked_nominal(&self, s: &DVector<f64>, u_stacked: &DVector<f64>) -> DVector<f64> {
        &self.phi * s + &self.gamma * u_stacked
    }
}
