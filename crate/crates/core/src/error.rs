use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearNotConverged { iterations: usize, residual: f64 },

    #[error("refinement budget exhausted: last iterates {previous} and {last}")]
    RefinementExhausted { previous: f64, last: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("mesh mismatch: expected {expected} values, got {got}")]
    MeshMismatch { expected: usize, got: usize },

    #[error("de Gennes constant not available: run compute_theta0 first")]
    Theta0Unavailable,

    #[error("no decay to fit: {0}")]
    NoDecay(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("corrupt grid file {path}: {reason}")]
    CorruptFile { path: String, reason: String },

    #[error("neighborhoods overlap: radius {ell} exceeds half the point separation {half_distance}")]
    OverlappingNeighborhoods { ell: f64, half_distance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
