use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("derivative order ({a}, {b}) is not supported by the {kernel} kernel")]
    UnsupportedDerivative { kernel: &'static str, a: u8, b: u8 },

    /// Factorization failed even after nugget escalation.
    #[error("singular system: factorization failed with nugget {nugget:.3e} (condition estimate {condition:.3e})")]
    Singular { condition: f64, nugget: f64 },

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("non-finite values produced: {0}")]
    Overflow(String),

    #[error("optimizer diverged after {iterations} iterations")]
    Diverged { iterations: usize, trace: Vec<f64> },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::Overflow(_) | Error::Diverged { .. } | Error::Singularity(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
