use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("mesh resolution must be at least 2 per direction, got {0}")]
    InvalidResolution(usize),

    #[error("unsupported spatial dimension {0} (expected 1 or 2)")]
    InvalidDimension(usize),

    #[error("space mismatch: expected {expected}, got {got}")]
    SpaceMismatch { expected: String, got: String },

    #[error("{what} did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    SolveFailure {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("operator not available in this regime: {0}")]
    InvalidRegime(String),

    #[error("dense mode unavailable: {size} unknowns exceeds the threshold {threshold}")]
    DenseModeUnavailable { size: usize, threshold: usize },

    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),

    #[error("initial data underspecified: {0}")]
    Underspecified(String),

    #[error("initial data inconsistent: {quantity} disagrees by {residual:.3e} (relative)")]
    Inconsistent { quantity: String, residual: f64 },

    #[error("{quantity} is not admissible initial data in this regime")]
    NotAdmissible { quantity: String },

    #[error("{quantity} is not mean-free (relative mean {ratio:.3e})")]
    NonZeroMean { quantity: String, ratio: f64 },

    #[error("missing analytic time derivative of {0}")]
    MissingTimeDerivative(&'static str),

    #[error("source not representable in closed form: {0}")]
    UnsupportedSource(String),

    #[error("series contains non-positive values; cannot fit an exponential rate")]
    NonPositiveSeries,

    #[error("time window is outside the mesh-resolved range: {0}")]
    UnresolvedRange(String),

    #[error("initial data is too narrowband for a smoothing check: {0}")]
    NarrowbandData(String),

    #[error("identity does not apply to this regime: {0}")]
    RegimeMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
