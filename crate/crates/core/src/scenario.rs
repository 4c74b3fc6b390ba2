//! Scenario sampling for the chance constraint.
//!
//! A chance constraint over the remaining horizon is replaced by
//! deterministic constraints at sampled disturbance sequences. Each sample
//! contributes one offset column `H = c_blk * a_err * w + c_stack`; keeping
//! the per-row maximum over columns is feasibility-equivalent to keeping
//! every sampled constraint, because all columns share the same
//! decision-dependent term.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::StackedPrediction;
use crate::rng::StreamKey;

/// Smallest number of scenarios for which the sampled program certifies the
/// chance constraint at level `s_k` with confidence `1 - beta`, given `d_k`
/// free decision variables: `ceil( 2/(1-s_k) * (ln(1/beta) + d_k) )`.
pub fn required_sample_count(s_k: f64, beta: f64, d_k: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&s_k) {
        if s_k >= 1.0 {
            return Err(Error::RiskBoundDiverges(s_k));
        }
        return Err(Error::invalid("s_k", format!("{s_k} is not a probability")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid("beta", format!("{beta} must lie in (0, 1)")));
    }
    if d_k == 0 {
        return Err(Error::invalid("d_k", "needs at least one decision variable"));
    }
    let bound = 2.0 / (1.0 - s_k) * ((1.0 / beta).ln() + d_k as f64);
    Ok(bound.ceil() as usize)
}

/// A batch of stacked disturbance samples, columns of an `(h*n) x count`
/// matrix, together with the stream key that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBatch {
    samples: DMatrix<f64>,
    block_dim: usize,
    seed_lineage: StreamKey,
}

impl ScenarioBatch {
    /// Draws `count` i.i.d. stacked sequences of `h` zero-mean Gaussian
    /// blocks with covariance `sigma_w`, through a PSD square-root factor
    /// applied to standard normal deviates from the keyed stream.
    pub fn draw(key: StreamKey, sigma_w: &DMatrix<f64>, h: usize, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("count", "at least one scenario is required"));
        }
        if h == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        let n = sigma_w.nrows();
        let factor = psd_factor(sigma_w)?;
        let mut rng = key.rng();
        let mut samples = DMatrix::zeros(h * n, count);
        // column-major fill: one full stacked sequence per column
        for mut col in samples.column_iter_mut() {
            for v in col.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        // per-block transform z -> L z
        let mut block = DMatrix::zeros(n, count);
        for b in 0..h {
            block.gemm(1.0, &factor, &samples.view((b * n, 0), (n, count)), 0.0);
            samples.view_mut((b * n, 0), (n, count)).copy_from(&block);
        }
        Ok(ScenarioBatch {
            samples,
            block_dim: n,
            seed_lineage: key,
        })
    }

    pub fn count(&self) -> usize {
        self.samples.ncols()
    }

    pub fn stacked_len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.samples.nrows() / self.block_dim
    }

    pub fn seed_lineage(&self) -> StreamKey {
        self.seed_lineage
    }

    /// Stacked disturbance sample `i` as an owned vector.
    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.samples.column(i).clone_owned()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }
}

/// Lower-triangular (or PSD square-root) factor `L` with `L L' = sigma`.
///
/// Falls back from Cholesky to a symmetric eigendecomposition when sigma is
/// only semidefinite; eigenvalues below `-1e-10` are a hard error.
pub(crate) fn psd_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma.nrows() != sigma.ncols() {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if let Some(chol) = sigma.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = sigma.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda < -1e-10 {
            return Err(Error::NotPsd {
                name: "sigma_w",
                eigenvalue: *lambda,
            });
        }
        let root = lambda.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(root);
    }
    Ok(scaled)
}

/// Offset columns of the sampled constraints: column `i` is
/// `c_blk * a_err * w_i + c_stack`.
pub fn constraint_offsets(batch: &ScenarioBatch, pred: &StackedPrediction) -> DMatrix<f64> {
    assert_eq!(
        batch.stacked_len(),
        pred.a_err.nrows(),
        "scenario samples do not match the prediction horizon"
    );
    let filter = &pred.c_blk * &pred.a_err;
    let mut offsets = DMatrix::zeros(filter.nrows(), batch.count());
    offsets.gemm(1.0, &filter, batch.samples(), 0.0);
    for mut col in offsets.column_iter_mut() {
        col += &pred.c_stack;
    }
    offsets
}

/// Row-max reduction of sampled constraint offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedConstraints {
    i_max: DVector<f64>,
    n_scenarios_used: usize,
}

impl ReducedConstraints {
    /// Keeps the per-row maximum over all offset columns.
    pub fn reduce(offsets: &DMatrix<f64>) -> Result<Self> {
        if offsets.ncols() == 0 {
            return Err(Error::invalid("offsets", "needs at least one scenario column"));
        }
        let mut i_max = DVector::from_element(offsets.nrows(), f64::NEG_INFINITY);
        for col in offsets.column_iter() {
            for (m, v) in i_max.iter_mut().zip(col.iter()) {
                if *v > *m {
                    *m = *v;
                }
            }
        }
        Ok(ReducedConstraints {
            i_max,
            n_scenarios_used: offsets.ncols(),
        })
    }

    /// Explicit offsets, for constraint-free or synthetic problems.
    pub fn from_offsets(i_max: DVector<f64>, n_scenarios_used: usize) -> Self {
        ReducedConstraints {
            i_max,
            n_scenarios_used,
        }
    }

    pub fn i_max(&self) -> &DVector<f64> {
        &self.i_max
    }

    pub fn n_scenarios_used(&self) -> usize {
        self.n_scenarios_used
    }
}
