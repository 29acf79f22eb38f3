use thiserror::Error;

/// Errors produced by the heat-kernel library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is numerically singular (condition estimate {condition:.3e} above cap {cap:.1e})")]
    SingularMatrix { condition: f64, cap: f64 },

    #[error("trace degree {degree} exceeds the configured cap {cap}")]
    DegreeCapExceeded { degree: usize, cap: usize },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("Σ-transform has a pole at z = 1")]
    PoleAtOne,

    #[error("power series is not invertible: linear coefficient {0:.3e} is too small")]
    NonInvertibleSeries(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root finder failed to converge: {0}")]
    NoConvergence(String),

    #[error("sampled matrix is ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("eigen-solver failed: {0}")]
    EigFailure(String),

    #[error("negative power of a zero spectral value")]
    ZeroSpectrumValue,

    #[error("regime violation: {0}")]
    RegimeViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
}

impl Error {
    /// Errors caused by bad input or violated preconditions, as opposed to
    /// numerical failures inside an otherwise valid computation.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::DegreeCapExceeded { .. }
                | Error::PreconditionViolated(_)
                | Error::PoleAtOne
                | Error::InvalidParameter(_)
                | Error::RegimeViolation(_)
                | Error::InvalidConfig(_)
                | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
