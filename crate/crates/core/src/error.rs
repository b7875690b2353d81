use thiserror::Error;

/// Errors raised by the optimization library.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration values or an invalid preset combination.
    #[error("configuration error: {0}")]
    Config(String),

    /// Mismatched sizes, NaN inputs, wrong processing stage and similar caller errors.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The linear system could not be factorized.
    #[error("singular system: {0}")]
    Singular(String),

    /// The optimality-criteria multiplier search could not bracket the volume target.
    #[error("volume bisection failed: {0}")]
    Bisection(String),

    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<Error> },

    #[error("iteration {iteration}: {source}")]
    Iteration { iteration: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::Sample { index, source: Box::new(self) }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration { iteration, source: Box::new(self) }
    }

    /// True when the root cause is a configuration problem (as opposed to a
    /// numerical failure or IO).
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Sample { source, .. } | Error::Iteration { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
