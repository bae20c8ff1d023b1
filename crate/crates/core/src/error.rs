use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label set: {0}")]
    LabelSet(String),

    #[error("label `{label}` is not in label set {task_id}")]
    UnknownLabel { label: String, task_id: String },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("requested {requested} examples but only {available} are available")]
    Size { requested: usize, available: usize },

    #[error("leakage-free split infeasible: requested test size {requested}, max achievable {max_test_size}")]
    InfeasibleSplit { requested: usize, max_test_size: usize },

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid pattern: {0}")]
    Pattern(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("verbalizer has no token for label `{0}`")]
    IncompleteVerbalizer(String),

    #[error("length budget {max_len} too small: fixed skeleton needs {needed}")]
    Budget { max_len: usize, needed: usize },

    #[error("token `{0}` is not in the backend vocabulary")]
    Vocabulary(String),

    #[error("no training data")]
    NoData,

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("ensemble has no members")]
    EmptyEnsemble,

    #[error("class `{0}` has fewer than two examples; cannot form positive pairs")]
    InfeasiblePositive(String),

    #[error("nothing to evaluate")]
    EmptyEval,

    #[error("backend error: {0}")]
    Backend(String),

    #[error("ensemble member (pvp {pvp_id}, seed {seed}): {source}")]
    Member {
        pvp_id: u32,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported artifact format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
