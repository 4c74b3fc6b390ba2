//! Monte Carlo estimation of the remaining mission-wide safety probability
//! under a stored policy, the discounted risk-bound update, and the
//! stage-wise bound that a per-step chance constraint would need to meet a
//! mission-wide target.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{LinearSystem, Polytope};
use crate::rng::StreamKey;
use crate::scenario::psd_factor;

/// Affine state-feedback policy over a trailing window of the mission:
/// at step `t`, `u = u_bar[t - base_step] + k_gain * (s - s_bar[t - base_step])`.
///
/// `s_bar` holds the nominal reference trajectory starting at the planning
/// state, one entry longer than `u_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    base_step: usize,
    u_bar: Vec<DVector<f64>>,
    k_gain: DMatrix<f64>,
    s_bar: Vec<DVector<f64>>,
}

impl AffinePolicy {
    /// Builds a policy from a planning state and input sequence; the nominal
    /// reference trajectory is rolled out internally so it satisfies the
    /// nominal recursion by construction.
    pub fn from_plan(
        sys: &LinearSystem,
        base_step: usize,
        start: &DVector<f64>,
        u_bar: Vec<DVector<f64>>,
        k_gain: DMatrix<f64>,
    ) -> Result<Self> {
        if u_bar.is_empty() {
            return Err(Error::invalid("u_bar", "policy needs at least one input"));
        }
        if k_gain.nrows() != sys.m() || k_gain.ncols() != sys.n() {
            return Err(Error::Dimension("feedback gain dimensions are wrong".into()));
        }
        let tail = sys.nominal_rollout(start, &u_bar);
        let mut s_bar = Vec::with_capacity(u_bar.len() + 1);
        s_bar.push(start.clone());
        s_bar.extend(tail);
        Ok(AffinePolicy {
            base_step,
            u_bar,
            k_gain,
            s_bar,
        })
    }

    /// Checks that the stored reference trajectory satisfies the nominal
    /// recursion under the stored inputs, to `tol`.
    pub fn validate(&self, sys: &LinearSystem, tol: f64) -> Result<()> {
        for (t, u) in self.u_bar.iter().enumerate() {
            let next = sys.a() * &self.s_bar[t] + sys.b() * u;
            if (&next - &self.s_bar[t + 1]).amax() > tol {
                return Err(Error::invalid(
                    "s_bar",
                    format!("reference trajectory breaks the nominal recursion at offset {t}"),
                ));
            }
        }
        Ok(())
    }

    pub fn base_step(&self) -> usize {
        self.base_step
    }

    /// First mission step after the policy's window.
    pub fn end_step(&self) -> usize {
        self.base_step + self.u_bar.len()
    }

    pub fn k_gain(&self) -> &DMatrix<f64> {
        &self.k_gain
    }

    pub fn u_bar(&self) -> &[DVector<f64>] {
        &self.u_bar
    }

    pub fn s_bar(&self) -> &[DVector<f64>] {
        &self.s_bar
    }

    /// Policy evaluation `u_bar[t] + K (s - s_bar[t])` at mission step `t`.
    pub fn input_at(&self, t: usize, s: &DVector<f64>) -> DVector<f64> {
        let offset = t
            .checked_sub(self.base_step)
            .expect("step precedes the policy window");
        assert!(offset < self.u_bar.len(), "step beyond the policy window");
        &self.u_bar[offset] + &self.k_gain * (s - &self.s_bar[offset])
    }

    /// The same policy restricted to steps `new_base..`, for reuse after the
    /// steps before `new_base` have already been applied.
    pub fn tail_from(&self, new_base: usize) -> AffinePolicy {
        let skip = new_base
            .checked_sub(self.base_step)
            .expect("tail starts before the policy window");
        assert!(skip < self.u_bar.len(), "tail would be empty");
        AffinePolicy {
            base_step: new_base,
            u_bar: self.u_bar[skip..].to_vec(),
            k_gain: self.k_gain.clone(),
            s_bar: self.s_bar[skip..].to_vec(),
        }
    }
}

/// Monte Carlo estimate of a safety probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwpsEstimate {
    pub p_hat: f64,
    pub n_samples: usize,
    pub n_safe: usize,
    /// One-sided 99% Clopper-Pearson lower confidence bound; diagnostic
    /// only, the controller consumes `p_hat`.
    pub lower_conf: f64,
}

/// Estimates the probability that every state after `from_step` up to the
/// policy's end stays in the safe set, by simulating closed-loop rollouts
/// from `s_k` under the stored policy with fresh disturbances.
pub fn estimate_remaining_mwps(
    sys: &LinearSystem,
    poly: &Polytope,
    policy: &AffinePolicy,
    from_step: usize,
    s_k: &DVector<f64>,
    n_samples: usize,
    key: StreamKey,
) -> MwpsEstimate {
    assert!(n_samples > 0, "estimate needs at least one sample");
    assert!(
        policy.base_step() <= from_step && from_step < policy.end_step(),
        "replay start lies outside the policy window"
    );
    assert_eq!(s_k.len(), sys.n(), "state has wrong dimension");
    let factor = psd_factor(sys.sigma_w()).expect("system covariance is PSD by construction");
    let end = policy.end_step();
    let n = sys.n();
    let n_c = poly.n_rows();

    // Closed-loop form: s+ = (A + BK) s + B (u_bar - K s_bar) + w. The
    // affine drift per step is sample-independent, so precompute it; all
    // rollouts then advance together as columns of one state matrix.
    let a_cl = sys.closed_loop(policy.k_gain());
    let drifts: Vec<DVector<f64>> = (from_step..end)
        .map(|t| {
            let i = t - policy.base_step();
            sys.b() * (&policy.u_bar()[i] - policy.k_gain() * &policy.s_bar()[i])
        })
        .collect();

    let mut rng = key.rng();
    let mut states = DMatrix::zeros(n, n_samples);
    for mut col in states.column_iter_mut() {
        col.copy_from(s_k);
    }
    let mut next = DMatrix::zeros(n, n_samples);
    let mut noise = DMatrix::zeros(n, n_samples);
    let mut resid = DMatrix::zeros(n_c, n_samples);
    let mut alive = vec![true; n_samples];

    for drift in &drifts {
        for v in noise.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for mut col in next.column_iter_mut() {
            col.copy_from(drift);
        }
        next.gemm(1.0, &a_cl, &states, 1.0);
        next.gemm(1.0, &factor, &noise, 1.0);
        std::mem::swap(&mut states, &mut next);

        resid.gemm(1.0, poly.c_mat(), &states, 0.0);
        for (j, alive_j) in alive.iter_mut().enumerate() {
            if *alive_j {
                for r in 0..n_c {
                    if resid[(r, j)] + poly.c_off()[r] > 0.0 {
                        *alive_j = false;
                        break;
                    }
                }
            }
        }
    }
    let n_safe = alive.iter().filter(|a| **a).count();

    MwpsEstimate {
        p_hat: n_safe as f64 / n_samples as f64,
        n_samples,
        n_safe,
        lower_conf: clopper_pearson_lower(n_safe, n_samples, 0.99),
    }
}

/// One-sided Clopper-Pearson lower bound at the given confidence level.
pub fn clopper_pearson_lower(successes: usize, trials: usize, confidence: f64) -> f64 {
    assert!(trials > 0 && successes <= trials);
    if successes == 0 {
        return 0.0;
    }
    let alpha = 1.0 - confidence;
    let dist = Beta::new(successes as f64, (trials - successes) as f64 + 1.0)
        .expect("valid Beta shape parameters");
    dist.inverse_cdf(alpha)
}

/// Discounted risk bound for the next planning problem:
/// `min(gamma_k * p_hat, cap)`. The cap keeps the scenario sample bound
/// finite when the estimate saturates at one.
pub fn risk_bound_update(gamma_k: f64, estimate: &MwpsEstimate, cap: f64) -> f64 {
    assert!(gamma_k > 0.0 && gamma_k <= 1.0, "discount must lie in (0, 1]");
    (gamma_k * estimate.p_hat).min(cap)
}

/// Per-stage safety level that forces a mission-wide level `s_target` over
/// `n_mission` stages through the union bound:
/// `(n_mission - 1)/n_mission + s_target/n_mission`.
pub fn stage_bound(n_mission: usize, s_target: f64) -> f64 {
    assert!(n_mission >= 1, "mission needs at least one stage");
    let n = n_mission as f64;
    (n - 1.0) / n + s_target / n
}

/// Grid of stage bounds: rows follow `n_values`, columns `s_values`.
pub fn stage_bound_surface(n_values: &[usize], s_values: &[f64]) -> Vec<Vec<f64>> {
    assert!(
        !n_values.is_empty() && !s_values.is_empty(),
        "surface needs at least one cell"
    );
    n_values
        .iter()
        .map(|&n| s_values.iter().map(|&s| stage_bound(n, s)).collect())
        .collect()
}
