use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("point r = {r} lies inside the obstacle (r0 = {r0})")]
    OutsideDomain { r: f64, r0: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at node {node}, t = {t}")]
    NonFinite { node: usize, t: f64 },

    #[error("outer-boundary flux {leak:.3e} exceeds hard limit relative to phi-mass at t = {t}")]
    BoundaryFlux { t: f64, leak: f64 },

    #[error("ill-conditioned rate fit: {0}")]
    IllConditionedFit(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
