use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps (off-diagonal norm {residual:e})")]
    EigenNoConvergence { sweeps: usize, residual: f64 },

    #[error("context tuple has no available action")]
    EmptyTuple,

    #[error("batch covariance is singular (lambda_min = {0:e}); rewards cannot be simulated")]
    NotSimulatable(f64),

    #[error("context lies outside the simulatable radius (|w|^2 = {0})")]
    RadiusExceeded(f64),

    #[error("horizon too small for LinUCB parameters: S = {s} must be below T = {horizon}")]
    HorizonTooSmall { s: f64, horizon: f64 },

    #[error("LinUCB parameter {name} = {value} is below its lower bound {bound}")]
    ParamBelowBound { name: &'static str, value: f64, bound: f64 },

    #[error("batch commit requested with {staged} staged observations (batch size {batch_size})")]
    OffBoundaryCommit { staged: usize, batch_size: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("internal numerical error: {0}")]
    Internal(String),
}

impl Error {
    /// True for errors caused by user input (config files, instance parameters)
    /// rather than by the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidPrior(_)
                | Error::InvalidInstance(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::HorizonTooSmall { .. }
                | Error::ParamBelowBound { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
