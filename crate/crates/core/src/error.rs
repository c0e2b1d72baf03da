use thiserror::Error;

/// Errors produced by the simulation, models and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not anti-Hermitian (deviation {0:e})")]
    NotAntiHermitian(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vector norm {0:e} is below the zero guard; summed states cancelled")]
    ZeroNorm(f64),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty set")]
    EmptySet,

    #[error("empty sequence")]
    EmptySequence,

    #[error("value {value} at index {index} is outside the open unit interval")]
    DomainError { index: usize, value: f64 },

    #[error("invalid tristochastic tensor: {0}")]
    InvalidTensor(String),

    #[error("variance {0} is not positive")]
    NonPositiveVariance(f64),

    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),

    #[error("not a density matrix: {0}")]
    InvalidDensity(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ConfigMismatch(_)
                | Error::InvalidTensor(_)
                | Error::Toml(_)
                | Error::Json(_)
                | Error::LengthMismatch { .. }
                | Error::ShapeMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
