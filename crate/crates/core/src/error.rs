use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: timestamp {ts} does not increase (previous {prev})")]
    Ordering { line: usize, ts: i64, prev: i64 },

    #[error("expected window of {expected} samples, got {actual}")]
    WindowSize { expected: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate link: signal and background click probabilities are both zero")]
    DegenerateLink,

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("split error: {0}")]
    Split(String),

    #[error("unsupported schema_version {found} (expected {expected})")]
    Schema { found: String, expected: String },

    #[error("malformed model: {0}")]
    Model(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
