use thiserror::Error;

/// Errors raised anywhere in the simulator and calibration pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("target {value} MHz outside attainable band [{low}, {high}] MHz")]
    OutOfBand { value: f64, low: f64, high: f64 },

    #[error("degenerate junction asymmetry (d = 1): frequency map is flat")]
    DegenerateAsymmetry,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular matrix (|det| = {det:e} below floor {floor:e})")]
    Singular { det: f64, floor: f64 },

    #[error("invalid crosstalk matrix: {0}")]
    InvalidMatrix(String),

    #[error("unknown element label `{0}`")]
    UnknownLabel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no usable peaks: {0}")]
    EmptyResult(String),

    #[error("fit did not converge after {iterations} iterations (last rms residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("insufficient ridge: only {usable} usable columns, need {needed}")]
    InsufficientRidge { usable: usize, needed: usize },

    #[error("no fringe signal: dominant spectral peak at DC")]
    NoSignal,

    #[error("flat trace: no oscillation detected")]
    FlatTrace,

    #[error("pole in {term}: denominator {value:e} MHz too close to zero")]
    Pole { term: &'static str, value: f64 },

    #[error("degenerate oscillation: Omega = 0")]
    DegenerateOmega,

    #[error("identifiability: {0}")]
    Identifiability(String),

    #[error("missing or duplicate estimate: {0}")]
    PairCoverage(String),

    #[error("io: {0}")]
    Io(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
