use thiserror::Error;

/// Errors raised by the solver, the problem builders and the I/O layer.
#[derive(Debug, Error)]
pub enum QmpoError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    Asymmetric(f64),

    #[error("matrix is singular or rank deficient: {0}")]
    Singular(String),

    /// G = 0: the problem collapses to an eigenvalue problem on H.
    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("assumption failed: {0}")]
    Assumption(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl QmpoError {
    /// True for errors that come from degenerate solver input rather than
    /// parsing or I/O. The CLI maps these to exit code 2.
    pub fn is_degenerate_input(&self) -> bool {
        matches!(
            self,
            QmpoError::Degenerate(_)
                | QmpoError::Singular(_)
                | QmpoError::Assumption(_)
                | QmpoError::Contract(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, QmpoError>;
