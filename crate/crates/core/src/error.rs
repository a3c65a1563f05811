use thiserror::Error;

/// Errors produced by graph construction, kernel evaluation and the experiment runners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("edge list is empty")]
    EmptyInput,
    #[error("negative weight {weight} on edge ({u}, {v})")]
    NegativeWeight { u: String, v: String, weight: f64 },
    #[error("non-finite weight on edge ({u}, {v})")]
    InvalidWeight { u: String, v: String },
    #[error("graph is disconnected: vertex {vertex} is unreachable from vertex 0")]
    DisconnectedGraph { vertex: usize },
    #[error("unknown vertex {0}")]
    UnknownVertex(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ball around {center} of radius {radius} has fewer than two vertices")]
    DegenerateBall { center: usize, radius: f64 },
    #[error("invalid constant {0}: must be at least 1")]
    InvalidConstant(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dense spectral decomposition limited to {limit} vertices, graph has {size}")]
    TooLarge { size: usize, limit: usize },
    #[error("balls overlap: d(w1, w2) = {distance} < 2r = {two_r}")]
    BallsOverlap { distance: usize, two_r: f64 },
    #[error("no data to fit")]
    EmptyData,
    #[error("support radius {needed} exceeds truncation radius {radius}")]
    TruncationExceeded { needed: usize, radius: usize },
    #[error("cosh series did not converge within {k_max} terms (last term {last_term:e})")]
    SeriesNotConverged { k_max: usize, last_term: f64 },
    #[error("boundary value system is singular")]
    SingularSystem,
    #[error("function is not positive on the measured region (min {min})")]
    NonPositive { min: f64 },
    #[error("function is not harmonic: residual {residual:e} exceeds {tolerance:e}")]
    NotHarmonic { residual: f64, tolerance: f64 },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
