use thiserror::Error;

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid ingestion window: {0}")]
    Window(String),

    #[error("request to {url} failed after {attempts} attempts: {last}")]
    Transport { url: String, attempts: usize, last: String },

    #[error("unexpected response from {url}: {detail}")]
    Response { url: String, detail: String },

    #[error("{path}: row {row}: {detail}")]
    Csv { path: String, row: u64, detail: String },

    #[error("{path}: line {line}: {detail}")]
    Line { path: String, line: usize, detail: String },

    #[error("requested {requested} neutral pairs but only {available} distinct unlinked pairs exist")]
    InfeasibleNeutral { requested: usize, available: usize },

    #[error(transparent)]
    Core(#[from] pairshot_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
