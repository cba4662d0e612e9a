use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("interval index {index} out of range for a mesh with {intervals} intervals")]
    IntervalOutOfRange { index: usize, intervals: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series did not converge: {0}")]
    SeriesNonConvergence(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("divided differences over {points} points exceed the stable limit of {limit}")]
    DividedDifferenceUnstable { points: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation requires a finite-element operator")]
    NotFiniteElement,

    #[error("time {t} outside the supplied history (last node {last})")]
    InsufficientHistory { t: f64, last: f64 },

    #[error("time {t} outside (0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("problem has no reference solution")]
    MissingReference,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
