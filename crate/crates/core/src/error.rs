use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("parity violation: {0}")]
    ParityViolation(String),

    #[error("invalid move: {0}")]
    InvalidMove(String),

    #[error("invalid degree: {0}")]
    InvalidDegree(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("calibration miss: {0}")]
    CalibrationMiss(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("precondition violation: {0}")]
    PreconditionViolation(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable tag, used in JSON diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid-dimension",
            Error::ParityViolation(_) => "parity-violation",
            Error::InvalidMove(_) => "invalid-move",
            Error::InvalidDegree(_) => "invalid-degree",
            Error::NumericalFailure(_) => "numerical-failure",
            Error::CalibrationMiss(_) => "calibration-miss",
            Error::BudgetExceeded(_) => "budget-exceeded",
            Error::PreconditionViolation(_) => "precondition-violation",
            Error::InvalidGrid(_) => "invalid-grid",
            Error::InvalidInput(_) => "invalid-input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
