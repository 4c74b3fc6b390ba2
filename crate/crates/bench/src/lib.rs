//! Shared fixtures for the pipeline benchmarks.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use mwsmpc::{LinearSystem, LqrDesign, MissionSpec, Polytope};

pub fn double_integrator() -> (LinearSystem, Polytope, LqrDesign, MissionSpec, DVector<f64>) {
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
    let design = mwsmpc::solve_dare(sys.a(), sys.b(), &DMatrix::identity(2, 2), &dmatrix![0.1])
        .unwrap();
    let spec = MissionSpec {
        n_mission: 11,
        s0_bound: 0.98,
        gammas: vec![0.99; 10],
        beta: 1e-6,
        q_cost: DMatrix::identity(2, 2),
        r_cost: dmatrix![0.1],
        sk_cap: 0.995,
        mc_samples: 10_000,
        seed: 1,
    };
    (sys, poly, design, spec, dvector![-8.0, 0.0])
}
