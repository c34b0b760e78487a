use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid truncation dimension {dim}: need at least {min}")]
    InvalidDimension { dim: usize, min: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("hamiltonian not diagonalizable: |gamma|/omega = {ratio} must stay below 1/2")]
    NotDiagonalizable { ratio: f64 },

    #[error("process is not valid: {0}")]
    ProcessValidity(String),

    #[error("state is not a valid density matrix: {0}")]
    StateValidity(String),

    #[error("ill-conditioned work basis: candidates {first} and {second} cannot be separated on this trace")]
    Conditioning { first: f64, second: f64 },

    #[error("field reaches the window edge: edge/peak intensity {ratio:e} exceeds {limit:e}")]
    Window { ratio: f64, limit: f64 },

    #[error("truncation did not converge: change {change:e} at dim {dim} (limit {max_dim})")]
    Convergence { dim: usize, max_dim: usize, change: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
