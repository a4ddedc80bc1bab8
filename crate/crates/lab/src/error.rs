use std::path::PathBuf;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: line {line}: {source}")]
    JsonLine {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Core(#[from] twohop_core::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0} already exists; runs are never overwritten")]
    RunExists(PathBuf),
    #[error("missing checkpoints for steps {steps:?} in {dir}")]
    MissingCheckpoints { dir: PathBuf, steps: Vec<usize> },
    #[error("{path}: example {index} is invalid: {violation}")]
    InvalidExample { path: PathBuf, index: usize, violation: String },
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }
}
