//! Randomized soundness checks for the dense QP solver.

use mwsmpc::model::StackedPrediction;
use mwsmpc::qp::{assemble, solve};
use mwsmpc::{
    LinearSystem, Polytope, QpProblem, QpStatus, ReducedConstraints, StreamKey, StreamPurpose,
};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn rng(tag: u64) -> ChaCha8Rng {
    StreamKey::new(99, 0, tag, StreamPurpose::Custom(2)).rng()
}

/// Random strictly convex QP with a known strictly feasible point.
fn random_feasible_qp(rng: &mut ChaCha8Rng, d_max: usize, p_max: usize) -> (QpProblem, DVector<f64>) {
    let d = rng.random_range(1..=d_max);
    let p = rng.random_range(1..=p_max);
    let factor = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let mut hess = &factor * factor.transpose();
    let ridge = rng.random_range(0.1..1.0);
    for i in 0..d {
        hess[(i, i)] += ridge;
    }
    hess = (&hess + hess.transpose()) * 0.5;
    let lin = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    let g = DMatrix::from_fn(p, d, |_, _| rng.random_range(-1.0..1.0));
    let anchor = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let mut h = -(&g * &anchor);
    for v in h.iter_mut() {
        *v -= rng.random_range(0.1..1.0);
    }
    (QpProblem::new(hess, lin, g, h).unwrap(), anchor)
}

/// Random feasible point reachable from the anchor along a random ray.
fn random_feasible_point(
    rng: &mut ChaCha8Rng,
    prob: &QpProblem,
    anchor: &DVector<f64>,
) -> DVector<f64> {
    let d = anchor.len();
    let dir = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let g_dir = prob.g_ineq() * &dir;
    let slack = prob.constraint_residual(anchor);
    let mut t_max = 100.0f64;
    for i in 0..g_dir.len() {
        if g_dir[i] > 1e-12 {
            t_max = t_max.min(-slack[i] / g_dir[i]);
        }
    }
    anchor + dir * rng.random_range(0.0..t_max.max(1e-9))
}

#[test]
fn optimal_solutions_dominate_random_feasible_points() {
    let mut rng = rng(1);
    for trial in 0..100 {
        let (prob, anchor) = random_feasible_qp(&mut rng, 30, 200);
        let sol = solve(&prob);
        assert_eq!(sol.status, QpStatus::Optimal, "trial {trial}");
        assert!(sol.kkt_stationarity <= 1e-8, "trial {trial}: {}", sol.kkt_stationarity);
        assert!(sol.kkt_complementarity <= 1e-8);
        assert!(sol.primal_violation <= 1e-8);
        assert!(sol.duals.min() >= -1e-10);

        let best = prob.objective(&sol.x);
        for _ in 0..100 {
            let candidate = random_feasible_point(&mut rng, &prob, &anchor);
            let value = prob.objective(&candidate);
            assert!(
                best <= value + 1e-9 * (1.0 + value.abs()),
                "trial {trial}: solver {best} beaten by sampled {value}"
            );
        }
    }
}

#[test]
fn dense_point_cloud_never_beats_the_solver() {
    // fewer problems, ten thousand sampled points each
    let mut rng = rng(2);
    for _ in 0..10 {
        let (prob, anchor) = random_feasible_qp(&mut rng, 10, 60);
        let sol = solve(&prob);
        assert_eq!(sol.status, QpStatus::Optimal);
        let best = prob.objective(&sol.x);
        for _ in 0..10_000 {
            let candidate = random_feasible_point(&mut rng, &prob, &anchor);
            let value = prob.objective(&candidate);
            assert!(best <= value + 1e-9 * (1.0 + value.abs()));
        }
    }
}

#[test]
fn active_set_matches_equality_constrained_solution() {
    let mut rng = rng(3);
    let mut nontrivial = 0usize;
    for _ in 0..200 {
        let (prob, _) = random_feasible_qp(&mut rng, 8, 30);
        let sol = solve(&prob);
        assert_eq!(sol.status, QpStatus::Optimal);
        let active: Vec<usize> = (0..prob.n_constraints())
            .filter(|i| sol.duals[*i] > 1e-6)
            .collect();
        if active.is_empty() {
            continue;
        }
        nontrivial += 1;
        // solve the KKT system with the active rows as equalities
        let d = prob.dim();
        let na = active.len();
        let mut kkt = DMatrix::zeros(d + na, d + na);
        kkt.view_mut((0, 0), (d, d)).copy_from(prob.hess());
        for (slot, &row) in active.iter().enumerate() {
            for j in 0..d {
                kkt[(d + slot, j)] = prob.g_ineq()[(row, j)];
                kkt[(j, d + slot)] = prob.g_ineq()[(row, j)];
            }
        }
        let mut rhs = DVector::zeros(d + na);
        for i in 0..d {
            rhs[i] = -prob.lin()[i];
        }
        for (slot, &row) in active.iter().enumerate() {
            rhs[d + slot] = -prob.h_ineq()[row];
        }
        let direct = kkt.lu().solve(&rhs).expect("active-set KKT is nonsingular");
        let x_eq = direct.rows(0, d).clone_owned();
        assert!(
            (&x_eq - &sol.x).amax() <= 1e-6,
            "mismatch {}",
            (&x_eq - &sol.x).amax()
        );
    }
    assert!(nontrivial >= 50, "only {nontrivial} problems had active constraints");
}

#[test]
fn scalar_tracking_assembly_minimizer() {
    // one step: cost (s + u)^2 + u^2 from s = 1 gives u* = -1/2
    let sys = LinearSystem::new(dmatrix![1.0], dmatrix![1.0], dmatrix![0.0]).unwrap();
    let poly = Polytope::new(dmatrix![1.0], dvector![-100.0]).unwrap();
    let pred = StackedPrediction::build(&sys, &dmatrix![0.0], &poly, 1).unwrap();
    let red = ReducedConstraints::from_offsets(dvector![-1e18], 1);
    let prob = assemble(
        &sys,
        &dmatrix![0.0],
        &dmatrix![1.0],
        &dmatrix![1.0],
        &pred,
        &dvector![1.0],
        &red,
    )
    .unwrap();
    let sol = solve(&prob);
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!((sol.x[0] + 0.5).abs() <= 1e-9, "u* = {}", sol.x[0]);
}

#[test]
fn assembled_objective_matches_rollout_cost() {
    let mut rng = rng(4);
    let sys = LinearSystem::new(
        dmatrix![1.0, 1.0; 0.0, 1.0],
        dmatrix![0.5; 1.0],
        DMatrix::identity(2, 2) * 0.04,
    )
    .unwrap();
    let poly = Polytope::new(
        dmatrix![1.0, 0.0; 0.0, 1.0; -1.0, 0.0; 0.0, -1.0],
        dvector![-2.0, -2.0, -10.0, -2.0],
    )
    .unwrap();
    let q = DMatrix::identity(2, 2);
    let r = dmatrix![0.1];
    let q_term = dmatrix![2.0599, 0.5916; 0.5916, 1.4228];
    let h = 6;
    let k_gain = dmatrix![-0.6167, -1.2703];
    let pred = StackedPrediction::build(&sys, &k_gain, &poly, h).unwrap();
    let red = ReducedConstraints::from_offsets(DVector::from_element(h * 4, -1e18), 1);
    let s_k = dvector![-3.0, 0.7];
    let prob = assemble(&sys, &q, &r, &q_term, &pred, &s_k, &red).unwrap();

    // the dropped constant: stage cost of the current state plus the
    // input-independent part of the stacked quadratic
    let mut q_bar = DMatrix::zeros(h * 2, h * 2);
    for t in 0..h - 1 {
        q_bar.view_mut((t * 2, t * 2), (2, 2)).copy_from(&q);
    }
    q_bar
        .view_mut(((h - 1) * 2, (h - 1) * 2), (2, 2))
        .copy_from(&q_term);
    let phi_s = &pred.phi * &s_k;
    let constant =
        (s_k.transpose() * &q * &s_k)[(0, 0)] + (phi_s.transpose() * &q_bar * &phi_s)[(0, 0)];

    for _ in 0..100 {
        let inputs: Vec<DVector<f64>> =
            (0..h).map(|_| DVector::from_fn(1, |_, _| rng.random_range(-2.0..2.0))).collect();
        let mut u_stacked = DVector::zeros(h);
        for (t, u) in inputs.iter().enumerate() {
            u_stacked.rows_mut(t, 1).copy_from(u);
        }
        let quadratic = prob.objective(&u_stacked) + constant;

        let mut rollout_cost = 0.0;
        let mut s = s_k.clone();
        for (t, u) in inputs.iter().enumerate() {
            rollout_cost += (s.transpose() * &q * &s)[(0, 0)];
            rollout_cost += (u.transpose() * &r * u)[(0, 0)];
            s = sys.a() * &s + sys.b() * u;
            if t == h - 1 {
                rollout_cost += (s.transpose() * &q_term * &s)[(0, 0)];
            }
        }
        assert!(
            (quadratic - rollout_cost).abs() <= 1e-9 * (1.0 + rollout_cost.abs()),
            "objective {quadratic} vs rollout {rollout_cost}"
        );
    }
}

#[test]
fn constrained_assembly_respects_reduced_offsets() {
    // tight synthetic offsets force the first predicted state inside a band
    let sys = LinearSystem::new(dmatrix![1.0], dmatrix![1.0], dmatrix![0.01]).unwrap();
    let poly = Polytope::new(dmatrix![1.0; -1.0], dvector![-1.0, -1.0]).unwrap();
    let pred = StackedPrediction::build(&sys, &dmatrix![-0.5], &poly, 1).unwrap();
    // i_max tightened to +-0.2 around zero
    let red = ReducedConstraints::from_offsets(dvector![-0.2, -0.2], 3);
    let prob = assemble(
        &sys,
        &dmatrix![1.0],
        &dmatrix![1e-6],
        &dmatrix![1.0],
        &pred,
        &dvector![1.0],
        &red,
    )
    .unwrap();
    let sol = solve(&prob);
    assert_eq!(sol.status, QpStatus::Optimal);
    let s1 = 1.0 + sol.x[0];
    assert!(s1.abs() <= 0.2 + 1e-9, "s1 = {s1} escaped the tightened band");
}
