use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("graph generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("graph is not connected")]
    DisconnectedGraph,

    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("chain is not irreducible")]
    NotIrreducible,

    #[error("chain is periodic with period {period}; steady-state disagreement diverges")]
    Periodic { period: usize },

    #[error("chain is not reversible (detailed-balance defect {defect:.3e})")]
    NotReversible { defect: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("eigenvalue computation failed: {0}")]
    EigSolverFailure(String),

    #[error("random target lemma violated: row sums spread {spread:.3e} around K = {kemeny}")]
    RandomTargetViolation { spread: f64, kemeny: f64 },

    #[error("covariance recursion did not converge in {iterations} iterations (trace {last_trace:.6e}, growing: {growing})")]
    NoConvergence {
        iterations: usize,
        last_trace: f64,
        growing: bool,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("step-size condition violated at node {node}: weight sum {sum} >= 1")]
    StepSizeViolation { node: usize, sum: f64 },

    #[error("weights are not symmetric on edge ({i}, {j})")]
    AsymmetricWeights { i: usize, j: usize },

    #[error("formation offsets are inconsistent (residual {residual:.3e})")]
    InconsistentFormation { residual: f64 },

    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam(_)
                | Error::DisconnectedGraph
                | Error::NotStochastic(_)
                | Error::DimensionMismatch { .. }
                | Error::NotPsd(_)
                | Error::StepSizeViolation { .. }
                | Error::AsymmetricWeights { .. }
                | Error::InconsistentFormation { .. }
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
