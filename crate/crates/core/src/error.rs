use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("t = {t} is outside the horizon [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },

    #[error("step size underflow at t = {t} (h = {h:e}); problem is too stiff or singular")]
    StiffnessOrSingularity { t: f64, h: f64 },

    #[error("non-finite value encountered at t = {t}")]
    NumericalBlowup { t: f64 },

    #[error("Newton iteration found no isolated root after {iterations} iterations (residual {residual:e})")]
    NoIsolatedRoot { iterations: usize, residual: f64 },

    #[error("singular Jacobian during Newton iteration")]
    SingularJacobian,

    #[error("trajectory does not decay exponentially (fitted slope {slope})")]
    NotExponentiallyStable { slope: f64 },

    #[error("eps*ln(1/eps) = {requested} has no root in (0, 1/e); the maximum attainable value is {max_attainable}")]
    NoSolution { requested: f64, max_attainable: f64 },

    #[error("at least {needed} samples are required, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("errors are numerically zero (max {max_error:e}); slope is undefined")]
    NearZeroError { max_error: f64 },

    #[error("initialization failed: {0}")]
    InitializationFailure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Annotated {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn annotate(self, context: impl Into<String>) -> Self {
        Error::Annotated {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping annotation layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Annotated { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::StiffnessOrSingularity { .. }
                | Error::NumericalBlowup { .. }
                | Error::NoIsolatedRoot { .. }
                | Error::SingularJacobian
                | Error::NotExponentiallyStable { .. }
                | Error::NoSolution { .. }
                | Error::NearZeroError { .. }
                | Error::InitializationFailure(_)
        )
    }
}
