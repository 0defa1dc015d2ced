use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("site {index} out of range for a lattice of {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("moment E{order} is undefined for q = {q}")]
    UndefinedMoment { order: usize, q: usize },

    #[error("cell value eta = {eta} is not admissible for q = {q}")]
    Parity { eta: i64, q: usize },

    #[error("move leaves cell {cell} outside 0..={q} (alpha = {alpha})")]
    CellBoundary { cell: usize, alpha: u32, q: usize },

    #[error("state space of {states} configurations exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: f64, cap: f64 },

    #[error("negative weight {0}")]
    NegativeWeight(f64),

    #[error("weights sum to {0}, not 1")]
    NotNormalized(f64),

    #[error("empty sample batch")]
    EmptyBatch,

    #[error("line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
