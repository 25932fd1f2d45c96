use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("input too short for {op}: need at least {needed}, got {got}")]
    InputTooShort {
        op: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("{layer} backward called without a cached forward pass")]
    MissingCache { layer: &'static str },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("parse error at byte offset {offset}: unexpected {found:?}")]
    Parse { offset: usize, found: String },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("insufficient data: need at least {required} samples, have {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence {
        epoch: usize,
        batch: usize,
        /// Validation losses of the epochs completed before divergence.
        completed_trace: Vec<f64>,
    },

    #[error("insufficient epochs for a stable average: need at least 6, got {0}")]
    InsufficientEpochs(usize),

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("search failed: {0}")]
    SearchFailure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
