use thiserror::Error;

/// Errors produced anywhere in the design pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "insufficient resolution at {frequency_hz} Hz: {cells_per_wavelength:.3} cells per wavelength (minimum {minimum})"
    )]
    Resolution {
        frequency_hz: f64,
        cells_per_wavelength: f64,
        minimum: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("linear solve failed at {frequency_hz} Hz: {reason}")]
    Solve { frequency_hz: f64, reason: String },

    #[error("optimizer: {0}")]
    Optimizer(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("feature {feature}: {source}")]
    Feature {
        feature: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical pipeline (solver, optimizer), as
    /// opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Solve { .. } | Error::Optimizer(_) => true,
            Error::Iteration { source, .. } | Error::Feature { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Iteration { source, .. } | Error::Feature { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
