use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty batch")]
    EmptyBatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ragged sample matrix: row {row} has {got} columns, expected {expected}")]
    RaggedSamples { row: usize, expected: usize, got: usize },

    #[error("{samples} samples but {labels} labels")]
    LabelCountMismatch { samples: usize, labels: usize },

    #[error("invalid label {0}, expected -1 or +1")]
    InvalidLabel(i8),

    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    #[error("empty accuracy window")]
    EmptyWindow,

    #[error("duplicate job id {0}")]
    DuplicateJob(crate::JobId),

    #[error("job {job} needs {need_mb:.1} MB but the largest GPU has {gpu_mb:.1} MB")]
    InfeasibleJob { job: crate::JobId, need_mb: f64, gpu_mb: f64 },

    #[error("empty fusion group")]
    EmptyGroup,

    #[error("insertion point {point} outside [1, {max}]")]
    InvalidInsertionPoint { point: usize, max: usize },

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("batch order does not cover the group dataset: {0}")]
    OrderMismatch(String),

    #[error("demand must be positive, got {0}")]
    NonPositiveDemand(f64),

    #[error("job {0} already completed")]
    DoubleCompletion(crate::JobId),

    #[error("completion time {now} does not match job end {t_end}")]
    CompletionTime { now: f64, t_end: f64 },

    #[error("out-of-order drift event at t={event} (current time {now})")]
    OutOfOrderDrift { event: f64, now: f64 },

    #[error("event queue corruption: time moved from {from} back to {to}")]
    ClockRegression { from: f64, to: f64 },

    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),

    #[error("malformed trace {}:{line}: {msg}", path.display())]
    Trace { path: PathBuf, line: usize, msg: String },

    #[error("malformed snapshot {}: {msg}", path.display())]
    Snapshot { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    /// Process exit status for this error: 2 for bad input files and
    /// unsatisfiable plans, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::Config(_)
            | CoreError::Snapshot { .. }
            | CoreError::Trace { .. }
            | CoreError::InfeasibleJob { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }
}
