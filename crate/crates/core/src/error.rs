use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown task id `{0}`")]
    UnknownTask(String),

    #[error(transparent)]
    Generation(#[from] crate::env::function::GenerationExhausted),

    #[error(transparent)]
    Grpo(#[from] crate::grpo::GrpoError),

    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),

    #[error("replay mismatch in trajectory {line} turn {turn}: {what}")]
    ReplayMismatch { line: usize, turn: usize, what: String },
}
