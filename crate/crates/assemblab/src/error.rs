use crate::pool::TraceEvent;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] assemblab_core::Error),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no task completed within the watchdog window ({completed}/{total} done)")]
    Deadlock { completed: usize, total: usize, trace: Vec<TraceEvent> },
    #[error("task {task} panicked: {message}")]
    TaskPanicked { task: usize, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("structural mismatch: {0}")]
    Structural(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
