//! Command-line front end: one config file in, CSV experiment artifacts out.

use mwsmpc_cli::{config, output};

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rand::Rng;

use config::{parse_config_file, RunConfig};
use mwsmpc::{
    blend_switch_policies, check_conservation, check_switching_bound, check_union_bound,
    run_batch, run_mission, solve_dare, stage_bound_surface, DiscreteChain, LqrDesign, StreamKey,
    StreamPurpose,
};

#[derive(Parser)]
#[command(
    name = "mwsmpc",
    about = "Shrinking-horizon stochastic MPC with a mission-wide safety bound",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single mission and write its trace CSV.
    Mission {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to the current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch of missions and write summary CSVs.
    Batch {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's mission count.
        #[arg(long)]
        missions: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one trace CSV per mission.
        #[arg(long)]
        traces: bool,
    },
    /// Write the stage-bound surface grid as CSV.
    Surface {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Largest mission length on the grid.
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        /// Number of grid points along the target-probability axis.
        #[arg(long, default_value_t = 51)]
        s_points: usize,
    },
    /// Print the LQR gain and terminal cost for the configured system.
    Lqr {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the exact finite-chain checks on random instances.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
    },
}

enum AppError {
    Config(String),
    Runtime(String),
}

impl From<config::ConfigError> for AppError {
    fn from(e: config::ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<mwsmpc::Error> for AppError {
    fn from(e: mwsmpc::Error) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(config: &Path, seed: Option<u64>, missions: Option<usize>) -> Result<RunConfig, AppError> {
    let mut cfg = parse_config_file(config)?;
    if let Some(seed) = seed {
        cfg.spec.seed = seed;
    }
    if let Some(m) = missions {
        if m == 0 {
            return Err(AppError::Config("missions must be positive".into()));
        }
        cfg.missions = m;
    }
    Ok(cfg)
}

fn design_for(cfg: &RunConfig) -> Result<LqrDesign, AppError> {
    Ok(solve_dare(
        cfg.system.a(),
        cfg.system.b(),
        &cfg.spec.q_cost,
        &cfg.spec.r_cost,
    )?)
}

fn out_dir(out: Option<PathBuf>) -> Result<PathBuf, AppError> {
    let dir = out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Mission { config, seed, out } => {
            let cfg = load(&config, seed, None)?;
            let design = design_for(&cfg)?;
            let trace = run_mission(
                &cfg.spec,
                &cfg.system,
                &cfg.safe_set,
                &design,
                &cfg.s0,
                0,
            )?;
            let dir = out_dir(out)?;
            let path = dir.join("mission_trace.csv");
            std::fs::write(&path, output::trace_csv(&trace, cfg.system.n(), cfg.system.m()))?;
            println!(
                "mission: success={} certified_S={:.6} fallbacks={} trace={}",
                trace.success,
                cfg.spec.certified_bound(),
                trace.fallbacks.iter().filter(|f| **f).count(),
                path.display()
            );
            Ok(())
        }
        Command::Batch {
            config,
            missions,
            seed,
            out,
            traces,
        } => {
            let cfg = load(&config, seed, missions)?;
            let design = design_for(&cfg)?;
            let result = run_batch(
                &cfg.spec,
                &cfg.system,
                &cfg.safe_set,
                &design,
                &cfg.s0,
                cfg.missions,
            )?;
            let dir = out_dir(out)?;
            let summary_path = dir.join("batch_summary.csv");
            std::fs::write(&summary_path, output::batch_summary_csv(&result.stats))?;
            std::fs::write(dir.join("batch_steps.csv"), output::batch_steps_csv(&result.stats))?;
            if traces {
                let trace_dir = dir.join("traces");
                std::fs::create_dir_all(&trace_dir)?;
                for (i, trace) in result.traces.iter().enumerate() {
                    std::fs::write(
                        trace_dir.join(format!("mission_{i:05}.csv")),
                        output::trace_csv(trace, cfg.system.n(), cfg.system.m()),
                    )?;
                }
            }
            println!(
                "batch: missions={} successes={} ratio={:.6} certified_S={:.6} summary={}",
                result.stats.missions,
                result.stats.successes,
                result.stats.success_ratio,
                result.stats.certified_bound,
                summary_path.display()
            );
            Ok(())
        }
        Command::Surface { out, n_max, s_points } => {
            if n_max == 0 || s_points < 2 {
                return Err(AppError::Config(
                    "surface needs n_max >= 1 and s_points >= 2".into(),
                ));
            }
            let n_values: Vec<usize> = (1..=n_max).collect();
            let s_values: Vec<f64> = (0..s_points)
                .map(|j| j as f64 / (s_points - 1) as f64)
                .collect();
            let grid = stage_bound_surface(&n_values, &s_values);
            let dir = out_dir(out)?;
            let path = dir.join("swps_surface.csv");
            std::fs::write(&path, output::surface_csv(&n_values, &s_values, &grid))?;
            println!("surface: {} rows -> {}", n_values.len() * s_values.len(), path.display());
            Ok(())
        }
        Command::Lqr { config } => {
            let cfg = load(&config, None, None)?;
            let design = design_for(&cfg)?;
            let k = &design.k_gain;
            let p = &design.p_cost;
            let k_cells: Vec<String> = k.iter().map(|v| format!("{v:.4}")).collect();
            println!("K = [{}]", k_cells.join(", "));
            println!("Q_N =");
            for i in 0..p.nrows() {
                let row: Vec<String> = (0..p.ncols()).map(|j| format!("{:.4}", p[(i, j)])).collect();
                println!("  [{}]", row.join(", "));
            }
            println!("certified_S = {:.6}", cfg.spec.certified_bound());
            Ok(())
        }
        Command::Oracle { seed, instances } => oracle_report(seed, instances),
    }
}

/// Random-chain validation of the probabilistic identities; prints one
/// line per check and fails (exit 2) on any violation.
fn oracle_report(seed: u64, instances: usize) -> Result<(), AppError> {
    let mut rng = StreamKey::new(seed, 0, 0, StreamPurpose::Custom(9)).rng();
    let mut worst_gap = 0.0f64;
    let mut switch_violations = 0usize;
    let mut union_violations = 0usize;

    for _ in 0..instances {
        let n = rng.random_range(2..=5);
        let horizon = rng.random_range(2..=6);
        let transitions: Vec<DMatrix<f64>> =
            (0..horizon).map(|_| random_kernel(&mut rng, n)).collect();
        let mut safe: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        if safe.iter().all(|s| !s) {
            safe[0] = true;
        }
        let chain = DiscreteChain::new(transitions, safe).map_err(|e| AppError::Runtime(e.to_string()))?;
        let s0 = rng.random_range(0..n);

        for k in 1..horizon {
            let (lhs, rhs) = check_conservation(&chain, s0, k);
            worst_gap = worst_gap.max((lhs - rhs).abs());
        }

        let gammas: Vec<f64> = (0..horizon - 1).map(|_| rng.random_range(0.85..1.0)).collect();
        let candidates: Vec<DMatrix<f64>> =
            (0..horizon - 1).map(|_| random_kernel(&mut rng, n)).collect();
        let policies = blend_switch_policies(&chain, &candidates, &gammas, rng.random_range(0.0..=1.0))
            .map_err(|e| AppError::Runtime(e.to_string()))?;
        let (mwps, bound) =
            check_switching_bound(&policies, &gammas, s0).map_err(|e| AppError::Runtime(e.to_string()))?;
        if mwps < bound - 1e-12 {
            switch_violations += 1;
        }

        let (full, lower) = check_union_bound(&chain, s0);
        if full < lower - 1e-12 {
            union_violations += 1;
        }
    }

    println!("conservation identity: worst |lhs - rhs| = {worst_gap:.3e} over {instances} chains");
    println!("policy switching bound: {switch_violations} violations over {instances} instances");
    println!("union lower bound: {union_violations} violations over {instances} instances");

    if worst_gap > 1e-12 || switch_violations > 0 || union_violations > 0 {
        return Err(AppError::Runtime("an exact-chain check failed".into()));
    }
    Ok(())
}

fn random_kernel(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let mut row: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let sum: f64 = row.iter().sum();
        if sum == 0.0 {
            row[0] = 1.0;
        }
        let sum: f64 = row.iter().sum();
        for (t, v) in row.iter().enumerate() {
            p[(s, t)] = v / sum;
        }
        let drift: f64 = 1.0 - p.row(s).iter().sum::<f64>();
        p[(s, 0)] += drift;
    }
    p
}
