//! CSV writers. Formatting is fixed so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;

use mwsmpc::{BatchStats, MissionTrace};

pub fn trace_csv(trace: &MissionTrace, n: usize, m: usize) -> String {
    let mut out = String::new();
    let mut header = String::from("k");
    for i in 1..=n {
        let _ = write!(header, ",s{i}");
    }
    for i in 1..=m {
        let _ = write!(header, ",u{i}");
    }
    header.push_str(",Sk,Nk,qp_status,fallback,safe");
    let _ = writeln!(out, "{header}");

    let n_steps = trace.inputs.len();
    for k in 0..=n_steps {
        let _ = write!(out, "{k}");
        for v in trace.states[k].iter() {
            let _ = write!(out, ",{v:.6}");
        }
        if k < n_steps {
            for v in trace.inputs[k].iter() {
                let _ = write!(out, ",{v:.6}");
            }
            let _ = write!(
                out,
                ",{:.6},{},{},{}",
                trace.risk_bounds[k],
                trace.scenario_counts[k],
                trace.qp_statuses[k].as_str(),
                trace.fallbacks[k] as u8
            );
        } else {
            // final state row carries no planning columns
            for _ in 0..m {
                out.push(',');
            }
            out.push_str(",,,,");
        }
        let _ = writeln!(out, ",{}", trace.per_state_safe[k] as u8);
    }
    out
}

pub fn batch_summary_csv(stats: &BatchStats) -> String {
    let mut out = String::from("missions,successes,ratio,S_certified\n");
    let _ = writeln!(
        out,
        "{},{},{:.6},{:.6}",
        stats.missions, stats.successes, stats.success_ratio, stats.certified_bound
    );
    out
}

pub fn batch_steps_csv(stats: &BatchStats) -> String {
    let mut out = String::from("k,mean_Sk,mean_Nk,fallbacks\n");
    for k in 0..stats.mean_risk_bound.len() {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{}",
            k, stats.mean_risk_bound[k], stats.mean_scenario_count[k], stats.fallback_counts[k]
        );
    }
    out
}

pub fn surface_csv(n_values: &[usize], s_values: &[f64], grid: &[Vec<f64>]) -> String {
    let mut out = String::from("N,S,bound\n");
    for (i, n) in n_values.iter().enumerate() {
        for (j, s) in s_values.iter().enumerate() {
            let _ = writeln!(out, "{},{:.6},{:.6}", n, s, grid[i][j]);
        }
    }
    out
}
