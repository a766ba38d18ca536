use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column {0} has zero norm")]
    ZeroColumn(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense storage refused: p = {p} exceeds cap {cap} (use the matrix-free path or raise the cap)")]
    DenseCapExceeded { p: usize, cap: usize },

    #[error("accumulator holds no samples")]
    EmptyAccumulator,

    #[error("matrix is not symmetric (max asymmetry {max_asym:e})")]
    NotSymmetric { max_asym: f64 },

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        /// Best available eigenvalue estimates at the point of failure.
        best: Vec<f64>,
    },

    #[error("inputs come from different runs: {0}")]
    RunMismatch(String),

    #[error("requires d > 4, got d = {0}")]
    DimensionTooSmall(usize),

    #[error("degenerate span: predicted vectors have rank 0")]
    DegenerateSpan,

    #[error("unknown figure id {0:?} (expected fig1..fig5)")]
    UnknownFigure(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
