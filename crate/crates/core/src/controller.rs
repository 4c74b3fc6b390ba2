//! Shrinking-horizon mission loop.
//!
//! Each step re-plans a policy lasting to the end of the mission: estimate
//! the remaining safety of the previous policy, discount it into the new
//! risk bound, sample enough disturbance scenarios for that bound, reduce
//! them, and solve the condensed QP. If the QP fails, the previous policy's
//! tail is kept (it remains admissible for any discount at most one), so
//! the loop never stalls after a feasible start.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{estimate_remaining_mwps, risk_bound_update, AffinePolicy};
use crate::lqr::LqrDesign;
use crate::model::{LinearSystem, Polytope, StackedPrediction};
use crate::qp::{assemble, solve, QpStatus};
use crate::rng::{StreamKey, StreamPurpose};
use crate::scenario::{
    constraint_offsets, psd_factor, required_sample_count, ReducedConstraints, ScenarioBatch,
};

/// Mission-level configuration: horizon, risk budget, costs, and sampling
/// parameters. System matrices and the safe set are passed separately.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionSpec {
    /// Mission length N; planning happens at steps `0..N`.
    pub n_mission: usize,
    /// Safety level the initial plan must certify.
    pub s0_bound: f64,
    /// Per-step discounts, one per replanning step `1..N`.
    pub gammas: Vec<f64>,
    /// Confidence budget for each scenario program.
    pub beta: f64,
    pub q_cost: DMatrix<f64>,
    pub r_cost: DMatrix<f64>,
    /// Ceiling applied to every risk bound before the sample-count formula.
    pub sk_cap: f64,
    /// Monte Carlo rollouts per remaining-safety estimate.
    pub mc_samples: usize,
    /// Master seed; all streams of a run derive from it.
    pub seed: u64,
}

impl MissionSpec {
    /// Mission-wide level certified by the configuration:
    /// `s0_bound * product(gammas)`.
    pub fn certified_bound(&self) -> f64 {
        self.s0_bound * self.gammas.iter().product::<f64>()
    }

    pub fn validate(&self, sys: &LinearSystem) -> Result<()> {
        if self.n_mission == 0 {
            return Err(Error::invalid("N", "mission must have at least one step"));
        }
        if self.gammas.len() != self.n_mission - 1 {
            return Err(Error::invalid(
                "gamma",
                format!(
                    "expected {} discount factors for N = {}, got {}",
                    self.n_mission - 1,
                    self.n_mission,
                    self.gammas.len()
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.s0_bound) {
            return Err(Error::invalid("S0", "must lie in [0, 1]"));
        }
        for (i, g) in self.gammas.iter().enumerate() {
            if !(*g > 0.0 && *g <= 1.0) {
                return Err(Error::invalid(
                    "gamma",
                    format!("entry {i} is {g}, must lie in (0, 1]"),
                ));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta", "must lie in (0, 1)"));
        }
        if !(self.sk_cap > 0.0 && self.sk_cap < 1.0) {
            return Err(Error::invalid("sk_cap", "must lie in (0, 1)"));
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples", "must be positive"));
        }
        let n = sys.n();
        let m = sys.m();
        if self.q_cost.nrows() != n || self.q_cost.ncols() != n {
            return Err(Error::invalid("Q", format!("must be {n}x{n}")));
        }
        if self.r_cost.nrows() != m || self.r_cost.ncols() != m {
            return Err(Error::invalid("R", format!("must be {m}x{m}")));
        }
        crate::model::require_psd(&self.q_cost, "Q")?;
        crate::model::require_psd(&self.r_cost, "R")?;
        if crate::model::min_symmetric_eigenvalue(&self.r_cost) <= 0.0 {
            return Err(Error::invalid("R", "must be positive definite"));
        }
        Ok(())
    }
}

/// Diagnostics for one planning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub risk_bound: f64,
    pub scenario_count: usize,
    pub qp_status: QpStatus,
    pub fallback: bool,
    /// Worst of the solver's KKT residuals (stationarity, complementarity,
    /// primal violation); meaningful when the status is optimal.
    pub kkt_residual: f64,
}

/// Everything one mission produced.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionTrace {
    /// States `s_0..s_N`.
    pub states: Vec<DVector<f64>>,
    /// Applied inputs `u_0..u_{N-1}`.
    pub inputs: Vec<DVector<f64>>,
    /// Risk bound used at each planning step (index 0 is the configured
    /// initial bound).
    pub risk_bounds: Vec<f64>,
    pub scenario_counts: Vec<usize>,
    pub qp_statuses: Vec<QpStatus>,
    pub fallbacks: Vec<bool>,
    pub kkt_residuals: Vec<f64>,
    /// Safe-set membership of each recorded state, start state included.
    pub per_state_safe: Vec<bool>,
    /// True iff every state after the start stayed in the safe set.
    pub success: bool,
}

/// Plans the policy for step `k`: risk-bound update, scenario program, QP.
/// Returns the previous policy's tail with the fallback flag set when the
/// QP does not come back optimal; at `k = 0` that situation is fatal.
pub fn plan_step(
    k: usize,
    s_k: &DVector<f64>,
    prev: Option<&AffinePolicy>,
    spec: &MissionSpec,
    sys: &LinearSystem,
    poly: &Polytope,
    design: &LqrDesign,
    mission_index: u64,
) -> Result<(AffinePolicy, StepRecord)> {
    let n_mission = spec.n_mission;
    assert!(k < n_mission, "planning step beyond the mission horizon");
    assert!(prev.is_some() || k == 0, "replanning requires a previous policy");
    let h = n_mission - k;
    let m = sys.m();

    let risk_bound = if k == 0 {
        spec.s0_bound.min(spec.sk_cap)
    } else {
        let estimate = estimate_remaining_mwps(
            sys,
            poly,
            prev.unwrap(),
            k,
            s_k,
            spec.mc_samples,
            StreamKey::new(spec.seed, mission_index, k as u64, StreamPurpose::SafetyEstimate),
        );
        risk_bound_update(spec.gammas[k - 1], &estimate, spec.sk_cap)
    };

    let scenario_count = required_sample_count(risk_bound, spec.beta, m * h)?;
    let batch = ScenarioBatch::draw(
        StreamKey::new(spec.seed, mission_index, k as u64, StreamPurpose::Scenarios),
        sys.sigma_w(),
        h,
        scenario_count,
    )?;
    let pred = StackedPrediction::build(sys, &design.k_gain, poly, h)?;
    let red = ReducedConstraints::reduce(&constraint_offsets(&batch, &pred))?;
    let prob = assemble(sys, &spec.q_cost, &spec.r_cost, &design.p_cost, &pred, s_k, &red)?;
    let sol = solve(&prob);

    let record = |fallback: bool| StepRecord {
        risk_bound,
        scenario_count,
        qp_status: sol.status,
        fallback,
        kkt_residual: sol
            .kkt_stationarity
            .max(sol.kkt_complementarity)
            .max(sol.primal_violation),
    };

    if sol.status == QpStatus::Optimal {
        let u_bar: Vec<DVector<f64>> = (0..h).map(|t| sol.x.rows(t * m, m).clone_owned()).collect();
        let policy = AffinePolicy::from_plan(sys, k, s_k, u_bar, design.k_gain.clone())?;
        Ok((policy, record(false)))
    } else if let Some(prev) = prev {
        Ok((prev.tail_from(k), record(true)))
    } else {
        Err(Error::InitialInfeasible)
    }
}

/// Runs one closed-loop mission: plan, apply the current step's input, draw
/// the true disturbance, advance, repeat.
pub fn run_mission(
    spec: &MissionSpec,
    sys: &LinearSystem,
    poly: &Polytope,
    design: &LqrDesign,
    s_0: &DVector<f64>,
    mission_index: u64,
) -> Result<MissionTrace> {
    spec.validate(sys)?;
    if !poly.contains(s_0) {
        return Err(Error::invalid("s0", "initial state lies outside the safe set"));
    }
    let n_mission = spec.n_mission;
    let n = sys.n();
    let factor = psd_factor(sys.sigma_w())?;

    let mut states = Vec::with_capacity(n_mission + 1);
    let mut inputs = Vec::with_capacity(n_mission);
    let mut risk_bounds = Vec::with_capacity(n_mission);
    let mut scenario_counts = Vec::with_capacity(n_mission);
    let mut qp_statuses = Vec::with_capacity(n_mission);
    let mut fallbacks = Vec::with_capacity(n_mission);
    let mut kkt_residuals = Vec::with_capacity(n_mission);

    let mut s = s_0.clone();
    states.push(s.clone());
    let mut per_state_safe = Vec::with_capacity(n_mission + 1);
    per_state_safe.push(true);
    let mut policy: Option<AffinePolicy> = None;
    let mut success = true;
    let mut noise = DVector::zeros(n);

    for k in 0..n_mission {
        let (next_policy, record) =
            plan_step(k, &s, policy.as_ref(), spec, sys, poly, design, mission_index)?;
        let u = next_policy.input_at(k, &s);

        let mut rng =
            StreamKey::new(spec.seed, mission_index, k as u64, StreamPurpose::Disturbance).rng();
        for v in noise.iter_mut() {
            *v = rng.sample(rand_distr::StandardNormal);
        }
        s = sys.a() * &s + sys.b() * &u + &factor * &noise;

        let safe = poly.contains(&s);
        if !safe {
            success = false;
        }
        per_state_safe.push(safe);
        states.push(s.clone());
        inputs.push(u);
        risk_bounds.push(record.risk_bound);
        scenario_counts.push(record.scenario_count);
        qp_statuses.push(record.qp_status);
        fallbacks.push(record.fallback);
        kkt_residuals.push(record.kkt_residual);
        policy = Some(next_policy);
    }

    Ok(MissionTrace {
        states,
        inputs,
        risk_bounds,
        scenario_counts,
        qp_statuses,
        fallbacks,
        kkt_residuals,
        per_state_safe,
        success,
    })
}

/// Aggregate statistics over a batch of independent missions.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub missions: usize,
    pub successes: usize,
    pub success_ratio: f64,
    pub certified_bound: f64,
    /// Per planning step, averaged over missions.
    pub mean_risk_bound: Vec<f64>,
    pub mean_scenario_count: Vec<f64>,
    pub fallback_counts: Vec<usize>,
    pub optimal_qp_count: usize,
    /// Worst KKT residual among all optimal QP solves in the batch.
    pub max_kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub stats: BatchStats,
    pub traces: Vec<MissionTrace>,
}

/// Runs `n_missions` independent missions on streams derived from the
/// master seed and the mission index; results are aggregated in mission
/// order, so thread scheduling cannot change any output.
pub fn run_batch(
    spec: &MissionSpec,
    sys: &LinearSystem,
    poly: &Polytope,
    design: &LqrDesign,
    s_0: &DVector<f64>,
    n_missions: usize,
) -> Result<BatchResult> {
    if n_missions == 0 {
        return Err(Error::invalid("missions", "must be positive"));
    }
    let traces: Vec<MissionTrace> = (0..n_missions)
        .into_par_iter()
        .map(|i| run_mission(spec, sys, poly, design, s_0, i as u64))
        .collect::<Result<Vec<_>>>()?;

    let n_mission = spec.n_mission;
    let successes = traces.iter().filter(|t| t.success).count();
    let mut mean_risk_bound = vec![0.0; n_mission];
    let mut mean_scenario_count = vec![0.0; n_mission];
    let mut fallback_counts = vec![0usize; n_mission];
    let mut optimal_qp_count = 0usize;
    let mut max_kkt = 0.0f64;
    for trace in &traces {
        for k in 0..n_mission {
            mean_risk_bound[k] += trace.risk_bounds[k];
            mean_scenario_count[k] += trace.scenario_counts[k] as f64;
            if trace.fallbacks[k] {
                fallback_counts[k] += 1;
            }
            if trace.qp_statuses[k] == QpStatus::Optimal {
                optimal_qp_count += 1;
                max_kkt = max_kkt.max(trace.kkt_residuals[k]);
            }
        }
    }
    let scale = 1.0 / n_missions as f64;
    for k in 0..n_mission {
        mean_risk_bound[k] *= scale;
        mean_scenario_count[k] *= scale;
    }

    Ok(BatchResult {
        stats: BatchStats {
            missions: n_missions,
            successes,
            success_ratio: successes as f64 / n_missions as f64,
            certified_bound: spec.certified_bound(),
            mean_risk_bound,
            mean_scenario_count,
            fallback_counts,
            optimal_qp_count,
            max_kkt_residual: max_kkt,
        },
        traces,
    })
}
