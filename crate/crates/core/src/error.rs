use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no causal representation: {0}")]
    NoCausalRepresentation(String),

    /// Raised when the p-th moment of the filter output does not exist,
    /// so that the physical dependence measure is undefined.
    #[error("undefined dependence measure: moment undefined ({0})")]
    UndefinedDependenceMeasure(String),

    #[error("mean undefined: {0}")]
    UndefinedMean(String),

    #[error("geometric tail extrapolation refused: {0}")]
    ExtrapolationRefused(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("insufficient replicas in past cell {cell}: {count} < {required}; use fewer bins or more replicas")]
    InsufficientCell {
        cell: usize,
        count: u64,
        required: u64,
    },

    #[error("too many quantization cells: {0}")]
    TooManyCells(usize),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("not available in closed form: {0}")]
    NotClosedForm(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
