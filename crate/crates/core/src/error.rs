use thiserror::Error;

/// Errors raised by the measure, operator, shift and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PideError {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("tolerance not met: best estimate {estimate:e} with error {error:e} (requested {requested:e})")]
    ToleranceNotMet { estimate: f64, error: f64, requested: f64 },

    #[error("no solution: {reason} (last residual {residual:e})")]
    NoSolution { reason: String, residual: f64 },

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("invalid operator plan: {0}")]
    PlanInvalid(String),

    #[error("kernel singularity: {0}")]
    Singularity(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("solution blew up at step {step} (tau = {tau})")]
    BlowUp { step: usize, tau: f64 },

    #[error("startup grading failed: {0}; try a smaller initial time step")]
    StartupGrading(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl PideError {
    pub fn domain(msg: impl Into<String>) -> Self {
        PideError::ParameterDomain(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        PideError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for PideError {
    fn from(e: std::io::Error) -> Self {
        PideError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PideError>;
