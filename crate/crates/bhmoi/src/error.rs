use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no sample sets")]
    NoSampleSets,

    #[error("sample set `{label}` has fewer than two distinct draws")]
    TooFewDraws { label: String },

    #[error("non-finite draw in sample set `{label}`")]
    NonFiniteDraw { label: String },

    #[error("grid mismatch")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("density values must be non-negative and have positive mass")]
    InvalidDensity,

    #[error("empty cluster")]
    EmptyCluster,

    #[error("inconsistent partition: {0}")]
    InconsistentPartition(String),

    #[error("instance too large for exhaustive search (n={n}, limit {limit})")]
    TooLargeForExhaustive { n: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mcmc divergence in {context}: acceptance rate {rate:.3} outside [0.05, 0.95]")]
    McmcDivergence { context: String, rate: f64 },

    #[error("calibration failed: no cutoff in grid meets target {target}; achieved rates {achieved:?}")]
    CalibrationFailed { target: f64, achieved: Vec<(f64, f64)> },

    #[error("too many failed replications: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{path}: parse error at line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
