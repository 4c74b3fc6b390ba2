//! Exact safety computations on small finite-state chains.
//!
//! These are brute-force reference routines: backward dynamic programming
//! for exact mission-safety probabilities, prefix enumeration for the
//! conservation identity (the survivor-weighted remaining safety equals the
//! full-horizon safety), the discounted policy-switching bound, and the
//! union lower bound. Chains are deliberately tiny; everything here is an
//! oracle for the continuous pipeline, not a production path.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Finite-state chain with per-step transition matrices and a safe mask.
/// Entry `(s, t)` of a transition matrix is the probability of moving from
/// state `s` to state `t`; rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChain {
    transitions: Vec<DMatrix<f64>>,
    safe: Vec<bool>,
}

impl DiscreteChain {
    pub fn new(transitions: Vec<DMatrix<f64>>, safe: Vec<bool>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::invalid("transitions", "horizon must be at least 1"));
        }
        let n = safe.len();
        if n == 0 {
            return Err(Error::invalid("safe", "chain needs at least one state"));
        }
        for (k, p) in transitions.iter().enumerate() {
            if p.nrows() != n || p.ncols() != n {
                return Err(Error::Dimension(format!(
                    "transition {k} is {}x{}, expected {n}x{n}",
                    p.nrows(),
                    p.ncols()
                )));
            }
            for s in 0..n {
                let mut row_sum = 0.0;
                for t in 0..n {
                    let v = p[(s, t)];
                    if v < 0.0 {
                        return Err(Error::invalid(
                            "transitions",
                            format!("negative probability at step {k}, row {s}"),
                        ));
                    }
                    row_sum += v;
                }
                if (row_sum - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(
                        "transitions",
                        format!("step {k}, row {s} sums to {row_sum}"),
                    ));
                }
            }
        }
        Ok(DiscreteChain { transitions, safe })
    }

    /// Same chain with one step's kernel replaced.
    pub fn with_step_kernel(&self, step: usize, kernel: DMatrix<f64>) -> Result<Self> {
        let mut transitions = self.transitions.clone();
        transitions[step] = kernel;
        DiscreteChain::new(transitions, self.safe.clone())
    }

    pub fn horizon(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_states(&self) -> usize {
        self.safe.len()
    }

    pub fn is_safe(&self, state: usize) -> bool {
        self.safe[state]
    }

    pub fn safe_mask(&self) -> &[bool] {
        &self.safe
    }

    pub fn transition(&self, step: usize) -> &DMatrix<f64> {
        &self.transitions[step]
    }

    /// Backward DP table of remaining safety: entry `s` is the probability
    /// that every state visited strictly after `from_step` is safe, given
    /// the chain sits at `s` at `from_step`.
    pub fn safety_values(&self, from_step: usize) -> Vec<f64> {
        let n = self.n_states();
        let horizon = self.horizon();
        assert!(from_step <= horizon, "step beyond the chain horizon");
        let mut value = vec![1.0; n];
        for k in (from_step..horizon).rev() {
            let p = &self.transitions[k];
            let mut next = vec![0.0; n];
            for s in 0..n {
                let mut acc = 0.0;
                for t in 0..n {
                    if self.safe[t] {
                        acc += p[(s, t)] * value[t];
                    }
                }
                next[s] = acc;
            }
            value = next;
        }
        value
    }

    /// Exact probability that all states after `from_step` through the end
    /// of the horizon are safe, starting from `state`.
    pub fn safety_probability(&self, state: usize, from_step: usize) -> f64 {
        assert!(state < self.n_states(), "state index out of range");
        self.safety_values(from_step)[state]
    }
}

/// Both sides of the conservation identity at an intermediate step `k`:
/// the full-horizon safety probability, and the sum over all safe length-k
/// prefixes of their probability times the remaining safety from their
/// endpoint. The two agree exactly.
pub fn check_conservation(chain: &DiscreteChain, s0: usize, k: usize) -> (f64, f64) {
    assert!(k >= 1 && k < chain.horizon(), "k must be an intermediate step");
    let lhs = chain.safety_probability(s0, 0);
    let remaining = chain.safety_values(k);

    // enumerate safe prefixes s_1..s_k
    let n = chain.n_states();
    let mut rhs = 0.0;
    let mut stack: Vec<(usize, usize, f64)> = vec![(s0, 0, 1.0)]; // (state, depth, prob)
    while let Some((state, depth, prob)) = stack.pop() {
        if depth == k {
            rhs += prob * remaining[state];
            continue;
        }
        let p = chain.transition(depth);
        for next in 0..n {
            if chain.is_safe(next) {
                let q = p[(state, next)];
                if q > 0.0 {
                    stack.push((next, depth + 1, prob * q));
                }
            }
        }
    }
    (lhs, rhs)
}

/// Exhaustive path enumeration of the same quantity as
/// [`DiscreteChain::safety_probability`]; exponential, test-scale only.
pub fn safety_probability_enumerated(chain: &DiscreteChain, s0: usize, from_step: usize) -> f64 {
    let n = chain.n_states();
    let horizon = chain.horizon();
    let mut total = 0.0;
    let mut stack: Vec<(usize, usize, f64)> = vec![(s0, from_step, 1.0)];
    while let Some((state, step, prob)) = stack.pop() {
        if step == horizon {
            total += prob;
            continue;
        }
        let p = chain.transition(step);
        for next in 0..n {
            if chain.is_safe(next) {
                let q = p[(state, next)];
                if q > 0.0 {
                    stack.push((next, step + 1, prob * q));
                }
            }
        }
    }
    total
}

/// Verifies the discounted policy-switching guarantee on a chain.
///
/// `policies[k]` is the full chain the step-`k` policy would realize; the
/// closed loop applies policy `k`'s kernel at step `k`. Each switch must
/// keep, at every safe state, at least `gammas[k-1]` times the remaining
/// safety of its predecessor; a violated premise is an error in the caller's
/// construction. Returns the closed-loop mission safety and the certified
/// lower bound `prod(gammas) * S_0`.
pub fn check_switching_bound(
    policies: &[DiscreteChain],
    gammas: &[f64],
    s0: usize,
) -> Result<(f64, f64)> {
    if policies.is_empty() {
        return Err(Error::invalid("policies", "need at least one policy"));
    }
    let horizon = policies[0].horizon();
    let n = policies[0].n_states();
    if policies.len() != horizon {
        return Err(Error::invalid(
            "policies",
            format!("need one policy per step: {} vs horizon {horizon}", policies.len()),
        ));
    }
    if gammas.len() != horizon - 1 {
        return Err(Error::invalid("gammas", "need one discount per switch"));
    }
    for p in policies {
        if p.horizon() != horizon || p.n_states() != n || p.safe_mask() != policies[0].safe_mask()
        {
            return Err(Error::invalid("policies", "inconsistent chain shapes"));
        }
    }

    // premise: each switch keeps a discounted fraction of the remaining
    // safety at every safe state
    for k in 1..horizon {
        let new_vals = policies[k].safety_values(k);
        let old_vals = policies[k - 1].safety_values(k);
        for s in 0..n {
            if policies[0].is_safe(s) && new_vals[s] < gammas[k - 1] * old_vals[s] - 1e-12 {
                return Err(Error::invalid(
                    "policies",
                    format!(
                        "switch at step {k} drops remaining safety at state {s}: {} < {} * {}",
                        new_vals[s],
                        gammas[k - 1],
                        old_vals[s]
                    ),
                ));
            }
        }
    }

    // closed loop: policy k's kernel at step k
    let mut value = vec![1.0; n];
    for k in (0..horizon).rev() {
        let p = policies[k].transition(k);
        let mut next = vec![0.0; n];
        for s in 0..n {
            let mut acc = 0.0;
            for t in 0..n {
                if policies[0].is_safe(t) {
                    acc += p[(s, t)] * value[t];
                }
            }
            next[s] = acc;
        }
        value = next;
    }
    let mwps = value[s0];
    let bound = gammas.iter().product::<f64>() * policies[0].safety_probability(s0, 0);
    Ok((mwps, bound))
}

/// Builds a policy-switch sequence that provably satisfies the discounted
/// premise of [`check_switching_bound`].
///
/// Policy `k` replaces policy `k-1`'s step-`k` kernel by a convex blend of
/// it with `candidates[k-1]`. Because later kernels are shared, the
/// remaining safety from step `k` is linear in the blended kernel, so the
/// largest admissible blend weight is computable in closed form; `tighten`
/// scales it (1.0 realizes switches that sit at the premise boundary).
pub fn blend_switch_policies(
    base: &DiscreteChain,
    candidates: &[DMatrix<f64>],
    gammas: &[f64],
    tighten: f64,
) -> Result<Vec<DiscreteChain>> {
    let horizon = base.horizon();
    if candidates.len() != horizon - 1 || gammas.len() != horizon - 1 {
        return Err(Error::invalid(
            "candidates",
            "need one candidate kernel and one discount per switch",
        ));
    }
    if !(0.0..=1.0).contains(&tighten) {
        return Err(Error::invalid("tighten", "must lie in [0, 1]"));
    }
    let n = base.n_states();
    let mut policies = Vec::with_capacity(horizon);
    policies.push(base.clone());
    for k in 1..horizon {
        let prev = &policies[k - 1];
        let v_prev = prev.safety_values(k);
        let v_next = prev.safety_values(k + 1);
        let old_kernel = prev.transition(k);
        let candidate = &candidates[k - 1];

        // remaining safety if step k used the candidate kernel outright
        let mut v_cand = vec![0.0; n];
        for s in 0..n {
            for t in 0..n {
                if base.is_safe(t) {
                    v_cand[s] += candidate[(s, t)] * v_next[t];
                }
            }
        }
        let mut weight: f64 = 1.0;
        for s in 0..n {
            if base.is_safe(s) && v_cand[s] < v_prev[s] {
                let slack = (1.0 - gammas[k - 1]) * v_prev[s];
                let drop = v_prev[s] - v_cand[s];
                weight = weight.min(slack / drop);
            }
        }
        weight *= tighten;
        let blended = candidate * weight + old_kernel * (1.0 - weight);
        policies.push(prev.with_step_kernel(k, blended)?);
    }
    Ok(policies)
}

/// Mission safety versus the union lower bound `1 - N + sum of per-stage
/// safety probabilities` (stage marginals are not conditioned on survival).
pub fn check_union_bound(chain: &DiscreteChain, s0: usize) -> (f64, f64) {
    let n = chain.n_states();
    let horizon = chain.horizon();
    let mwps = chain.safety_probability(s0, 0);

    let mut marginal = vec![0.0; n];
    marginal[s0] = 1.0;
    let mut stage_sum = 0.0;
    for k in 0..horizon {
        let p = chain.transition(k);
        let mut next = vec![0.0; n];
        for s in 0..n {
            if marginal[s] > 0.0 {
                for t in 0..n {
                    next[t] += marginal[s] * p[(s, t)];
                }
            }
        }
        marginal = next;
        stage_sum += marginal
            .iter()
            .enumerate()
            .filter(|(t, _)| chain.is_safe(*t))
            .map(|(_, v)| v)
            .sum::<f64>();
    }
    (mwps, 1.0 - horizon as f64 + stage_sum)
}
