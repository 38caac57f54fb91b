use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("positivity violation: smallest eigenvalue {0:e}")]
    Positivity(f64),
    #[error("unstable projected mode: {0}")]
    UnstableMode(String),
    #[error("numerical abort at step {step}: {reason}")]
    NumericalAbort { step: usize, reason: String },
    #[error("analysis error: {0}")]
    Analysis(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalAbort { .. } | Error::Positivity(_))
    }
}
