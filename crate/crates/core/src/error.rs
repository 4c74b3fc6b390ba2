use thiserror::Error;

/// Errors surfaced by construction and solve routines.
///
/// Dimension mismatches inside hot loops (rollouts, constraint assembly)
/// panic instead; they indicate programming errors, not recoverable states.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{0}")]
    Dimension(String),

    #[error("matrix `{name}` is not symmetric within {tol:.1e}")]
    NotSymmetric { name: &'static str, tol: f64 },

    #[error("matrix `{name}` has eigenvalue {eigenvalue:.3e} below the admissible floor")]
    NotPsd { name: &'static str, eigenvalue: f64 },

    #[error("Riccati iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergent { residual: f64, iterations: usize },

    #[error("risk bound {0} is >= 1, the scenario sample bound diverges")]
    RiskBoundDiverges(f64),

    #[error("invalid {name}: {reason}")]
    Invalid { name: &'static str, reason: String },

    #[error("optimization problem at mission start is infeasible")]
    InitialInfeasible,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
