//! Shrinking-horizon stochastic MPC for linear systems under a
//! mission-wide safety constraint.
//!
//! Instead of bounding the violation probability at each time step, the
//! controller bounds the probability that the *entire* state trajectory
//! stays inside a polytopic safe set. Each step it estimates the remaining
//! safety of the previous plan by Monte Carlo, discounts it into the next
//! risk bound, replaces the chance constraint by sampled scenario
//! constraints (reduced to one row-max offset vector), and solves a dense
//! QP over the remaining nominal inputs. A batch runner evaluates the
//! closed loop over many seeded missions; the `oracle` module provides
//! exact finite-chain references for the probabilistic identities the
//! design relies on.

pub mod controller;
pub mod error;
pub mod estimator;
pub mod lqr;
pub mod model;
pub mod oracle;
pub mod qp;
pub mod rng;
pub mod scenario;

pub use controller::{run_batch, run_mission, BatchResult, BatchStats, MissionSpec, MissionTrace};
pub use error::{Error, Result};
pub use estimator::{
    estimate_remaining_mwps, risk_bound_update, stage_bound, stage_bound_surface, AffinePolicy,
    MwpsEstimate,
};
pub use lqr::{solve_dare, LqrDesign};
pub use model::{LinearSystem, Polytope, StackedPrediction};
pub use oracle::{
    blend_switch_policies, check_conservation, check_switching_bound, check_union_bound,
    DiscreteChain,
};
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use rng::{StreamKey, StreamPurpose};
pub use scenario::{required_sample_count, ReducedConstraints, ScenarioBatch};
