//! The row-max reduction must be feasibility-equivalent to keeping every
//! sampled constraint.

use mwsmpc::model::StackedPrediction;
use mwsmpc::scenario::constraint_offsets;
use mwsmpc::{
    required_sample_count, LinearSystem, Polytope, ReducedConstraints, ScenarioBatch, StreamKey,
    StreamPurpose,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn rng(tag: u64) -> ChaCha8Rng {
    StreamKey::new(555, 0, tag, StreamPurpose::Custom(1)).rng()
}

fn random_instance(
    rng: &mut ChaCha8Rng,
) -> (LinearSystem, Polytope, StackedPrediction, ScenarioBatch) {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=2);
    let h = rng.random_range(1..=4);
    let rows = rng.random_range(1..=4);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
    let root = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.6..0.6));
    let sys = LinearSystem::new(a, b, &root * root.transpose()).unwrap();
    let poly = loop {
        let c_mat = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
        let c_off = DVector::from_fn(rows, |_, _| rng.random_range(-2.0..0.5));
        if let Ok(p) = Polytope::new(c_mat, c_off) {
            break p;
        }
    };
    let k_gain = DMatrix::from_fn(m, n, |_, _| rng.random_range(-0.4..0.4));
    let pred = StackedPrediction::build(&sys, &k_gain, &poly, h).unwrap();
    let count = rng.random_range(1..=30);
    let key = StreamKey::new(555, 1, rng.random::<u32>() as u64, StreamPurpose::Scenarios);
    let batch = ScenarioBatch::draw(key, sys.sigma_w(), h, count).unwrap();
    (sys, poly, pred, batch)
}

#[test]
fn reduction_is_feasibility_equivalent() {
    let mut rng = rng(0);
    let mut checked = 0usize;
    for _ in 0..1000 {
        let (_sys, _poly, pred, batch) = random_instance(&mut rng);
        let offsets = constraint_offsets(&batch, &pred);
        let red = ReducedConstraints::reduce(&offsets).unwrap();
        let hn = pred.a_err.nrows();

        for _ in 0..100 {
            let x = DVector::from_fn(hn, |_, _| rng.random_range(-4.0..4.0));
            let shared = &pred.c_blk * &x;
            let reduced_feasible = red
                .i_max()
                .iter()
                .zip(shared.iter())
                .all(|(i, t)| i + t <= 0.0);
            let all_feasible = (0..offsets.ncols()).all(|col| {
                offsets
                    .column(col)
                    .iter()
                    .zip(shared.iter())
                    .all(|(o, t)| o + t <= 0.0)
            });
            assert_eq!(reduced_feasible, all_feasible);
            checked += 1;
        }
    }
    assert_eq!(checked, 100_000);
}

#[test]
fn every_row_max_is_attained_by_a_scenario() {
    let mut rng = rng(7);
    for _ in 0..200 {
        let (_, _, pred, batch) = random_instance(&mut rng);
        let offsets = constraint_offsets(&batch, &pred);
        let red = ReducedConstraints::reduce(&offsets).unwrap();
        assert_eq!(red.n_scenarios_used(), batch.count());
        for j in 0..offsets.nrows() {
            let attained = (0..offsets.ncols()).any(|i| offsets[(j, i)] == red.i_max()[j]);
            assert!(attained, "row {j} max not attained by any scenario");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rowmax_equivalence_on_raw_matrices(
        rows in 1usize..6,
        cols in 1usize..12,
        seed in any::<u64>(),
        shift in -2.0f64..2.0,
    ) {
        let mut r = rng(seed);
        let offsets = DMatrix::from_fn(rows, cols, |_, _| r.random_range(-3.0..3.0));
        let red = ReducedConstraints::reduce(&offsets).unwrap();
        let t = DVector::from_fn(rows, |_, _| r.random_range(-3.0..3.0) + shift);
        let reduced = red.i_max().iter().zip(t.iter()).all(|(i, v)| i + v <= 0.0);
        let full = (0..cols).all(|c| offsets.column(c).iter().zip(t.iter()).all(|(o, v)| o + v <= 0.0));
        prop_assert_eq!(reduced, full);
    }

    #[test]
    fn sample_bound_monotonicity(
        s1 in 0.0f64..0.995,
        s2 in 0.0f64..0.995,
        beta in 1e-9f64..0.5,
        d1 in 1usize..40,
        d2 in 1usize..40,
    ) {
        let lo_s = s1.min(s2);
        let hi_s = s1.max(s2);
        let lo_d = d1.min(d2);
        let hi_d = d1.max(d2);
        prop_assert!(required_sample_count(lo_s, beta, lo_d).unwrap()
            <= required_sample_count(hi_s, beta, lo_d).unwrap());
        prop_assert!(required_sample_count(lo_s, beta, lo_d).unwrap()
            <= required_sample_count(lo_s, beta, hi_d).unwrap());
        prop_assert!(required_sample_count(lo_s, beta / 2.0, lo_d).unwrap()
            >= required_sample_count(lo_s, beta, lo_d).unwrap());
    }

    #[test]
    fn batches_regenerate_exactly(seed in any::<u64>(), count in 1usize..20, h in 1usize..5) {
        let key = StreamKey::new(seed, 0, 0, StreamPurpose::Scenarios);
        let sigma = DMatrix::identity(2, 2) * 0.2;
        let a = ScenarioBatch::draw(key, &sigma, h, count).unwrap();
        let b = ScenarioBatch::draw(key, &sigma, h, count).unwrap();
        prop_assert_eq!(a, b);
    }
}
