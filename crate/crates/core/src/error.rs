use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("operator is not invertible: smallest |eigenvalue| = {min_abs_eigenvalue:e}")]
    NotInvertible { min_abs_eigenvalue: f64 },

    #[error("operator norm {norm:e} exceeds overflow limit {limit:e}")]
    Overflow { norm: f64, limit: f64 },

    #[error("time {0} is not a grid point")]
    OffGrid(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("integrand requested state at step {requested} but only steps 0..={available} are known")]
    NotAdapted { requested: usize, available: usize },

    #[error("generator degenerates at t = {time}: {reason}")]
    Degenerate { time: f64, reason: String },

    #[error("unknown {kind} '{name}'; registered: {known}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("config error: {0}")]
    Config(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
