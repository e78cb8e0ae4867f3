use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed term: {0}")]
    MalformedTerm(String),
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid experience data: {0}")]
    Schema(String),
    #[error("duplicate plan id `{0}`")]
    DuplicatePlan(String),
    #[error("plan `{0}` already grounded with different values")]
    Regrounding(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing knowledge: {0}")]
    MissingKnowledge(String),
    #[error("all paired differences are zero")]
    NoDifference,
    #[error("zero variance")]
    ZeroVariance,
    #[error("backend error: {0}")]
    Backend(String),
    #[error("run stage error: {0}")]
    Stage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Backend failures are the only retryable class.
    pub fn is_backend(&self) -> bool {
        matches!(self, Error::Backend(_))
    }
}
