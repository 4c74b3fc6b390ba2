use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use mwsmpc::model::StackedPrediction;
use mwsmpc::scenario::constraint_offsets;
use mwsmpc::{
    estimate_remaining_mwps, run_mission, solve_dare, AffinePolicy, ReducedConstraints,
    ScenarioBatch, StreamKey, StreamPurpose,
};
use mwsmpc_bench::double_integrator;
use nalgebra::dvector;

fn bench_dare(c: &mut Criterion) {
    let (sys, _, _, spec, _) = double_integrator();
    c.bench_function("dare_solve", |b| {
        b.iter(|| {
            let design = solve_dare(
                black_box(sys.a()),
                black_box(sys.b()),
                &spec.q_cost,
                &spec.r_cost,
            )
            .unwrap();
            black_box(design.p_cost[(0, 0)])
        })
    });
}

fn bench_scenario_step(c: &mut Criterion) {
    let (sys, poly, design, _, _) = double_integrator();
    let pred = StackedPrediction::build(&sys, &design.k_gain, &poly, 10).unwrap();
    let key = StreamKey::new(1, 0, 0, StreamPurpose::Scenarios);
    c.bench_function("scenario_draw_reduce_4964", |b| {
        b.iter(|| {
            let batch = ScenarioBatch::draw(key, sys.sigma_w(), 10, 4964).unwrap();
            let offsets = constraint_offsets(&batch, &pred);
            black_box(ReducedConstraints::reduce(&offsets).unwrap())
        })
    });
}

fn bench_qp(c: &mut Criterion) {
    let (sys, poly, design, spec, s0) = double_integrator();
    let pred = StackedPrediction::build(&sys, &design.k_gain, &poly, 10).unwrap();
    let key = StreamKey::new(1, 0, 0, StreamPurpose::Scenarios);
    let batch = ScenarioBatch::draw(key, sys.sigma_w(), 10, 4964).unwrap();
    let red = ReducedConstraints::reduce(&constraint_offsets(&batch, &pred)).unwrap();
    c.bench_function("qp_assemble_solve_d10", |b| {
        b.iter(|| {
            let prob = mwsmpc::qp::assemble(
                &sys,
                &spec.q_cost,
                &spec.r_cost,
                &design.p_cost,
                &pred,
                black_box(&s0),
                &red,
            )
            .unwrap();
            black_box(mwsmpc::qp::solve(&prob))
        })
    });
}

fn bench_estimate(c: &mut Criterion) {
    let (sys, poly, design, _, s0) = double_integrator();
    let policy = AffinePolicy::from_plan(
        &sys,
        0,
        &s0,
        vec![dvector![0.3]; 11],
        design.k_gain.clone(),
    )
    .unwrap();
    let key = StreamKey::new(1, 0, 1, StreamPurpose::SafetyEstimate);
    c.bench_function("mwps_estimate_10k", |b| {
        b.iter(|| {
            black_box(estimate_remaining_mwps(
                &sys,
                &poly,
                &policy,
                1,
                &dvector![-7.0, 0.5],
                10_000,
                key,
            ))
        })
    });
}

fn bench_mission(c: &mut Criterion) {
    let (sys, poly, design, spec, s0) = double_integrator();
    let mut group = c.benchmark_group("mission");
    group.sample_size(10);
    group.bench_function("full_mission", |b| {
        let mut index = 0u64;
        b.iter(|| {
            index += 1;
            black_box(run_mission(&spec, &sys, &poly, &design, &s0, index).unwrap())
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_dare,
    bench_scenario_step,
    bench_qp,
    bench_estimate,
    bench_mission
);
criterion_main!(benches);
