use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),

    /// Raised before any training starts.
    #[error("infeasible sweep: {0}")]
    Infeasible(String),

    #[error("train/test leakage in cell (size {size}, replicate {replicate})")]
    Leakage { size: usize, replicate: usize },

    #[error("unknown metric `{0}` (expected accuracy, macro_f1 or weighted_f1)")]
    UnknownMetric(String),

    #[error("unsupported result file: {0}")]
    Format(String),

    #[error(transparent)]
    Core(#[from] pairshot_core::Error),

    #[error(transparent)]
    Ingest(#[from] pairshot_ingest::IngestError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
