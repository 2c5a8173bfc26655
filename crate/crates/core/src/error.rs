use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rejection sampling exhausted {attempts} attempts with {accepted} of {requested} draws accepted")]
    RejectionExhausted {
        attempts: usize,
        accepted: usize,
        requested: usize,
    },

    #[error("empty sample passed to {0}")]
    EmptySample(&'static str),

    #[error("degenerate sample in {context}: {detail}")]
    DegenerateSample {
        context: &'static str,
        detail: String,
    },

    #[error("unknown task '{0}'")]
    UnknownTask(String),

    #[error("unknown method '{0}'")]
    UnknownMethod(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error(transparent)]
    Shape(#[from] ndarray::ShapeError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
