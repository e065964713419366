use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("no usable records")]
    NoUsableRecords,

    #[error("cannot stratify batch {batch}: {reason}")]
    CannotStratify { batch: usize, reason: String },

    #[error("batch {batch} too small to split: {len} records (minimum {min})")]
    BatchTooSmall { batch: usize, len: usize, min: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged (learning_rate={learning_rate}, l2={l2}, epochs={epochs}, minibatch={minibatch})")]
    Diverged {
        learning_rate: f64,
        l2: f64,
        epochs: usize,
        minibatch: usize,
    },

    #[error("replica {replica} missing in batch {batch}")]
    MissingReplica { replica: usize, batch: usize },

    #[error("all {} tuning trials failed: {}", .0.len(), .0.join("; "))]
    AllTrialsFailed(Vec<String>),

    #[error("AUC undefined: {0}")]
    AucUndefined(String),

    #[error("insufficient observations: {have} points for {need} basis functions")]
    InsufficientObservations { have: usize, need: usize },

    #[error("malformed knot vector: {0}")]
    MalformedKnots(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate histogram: pooled values are constant")]
    DegenerateHistogram,
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidConfig { .. } | Error::Schema(_) | Error::Parse(_))
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
