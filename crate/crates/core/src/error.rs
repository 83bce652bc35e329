use thiserror::Error;

use crate::policy::Policy;
use crate::skewlin::SkewMatrix;

pub type Result<T> = std::result::Result<T, GbpmError>;

#[derive(Debug, Error)]
pub enum GbpmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("policy leaves the reference support (context {context}, action {action}); divergence is infinite")]
    Support { context: usize, action: usize },

    #[error("gradient undefined on the simplex boundary (context {context}, action {action})")]
    Boundary { context: usize, action: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("equilibrium solver did not converge after {iterations} iterations (gap {gap:.3e})")]
    SolverNotConverged {
        iterations: usize,
        gap: f64,
        best: Box<Policy>,
    },

    #[error("best response did not converge (residual {residual:.3e})")]
    BestResponseNotConverged { residual: f64, last: Box<Policy> },

    #[error("estimator did not converge after {iterations} iterations (residual {residual:.3e})")]
    EstimatorNotConverged {
        iterations: usize,
        residual: f64,
        last: Box<SkewMatrix>,
    },
}

impl GbpmError {
    /// Short machine-readable category, used by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            GbpmError::Dimension(_) | GbpmError::InvalidSpec(_) | GbpmError::Index(_) => "spec",
            GbpmError::Support { .. } | GbpmError::Boundary { .. } | GbpmError::Domain(_) => {
                "domain"
            }
            GbpmError::NotPsd { .. } => "domain",
            GbpmError::SolverNotConverged { .. }
            | GbpmError::BestResponseNotConverged { .. }
            | GbpmError::EstimatorNotConverged { .. } => "numerical",
        }
    }
}
