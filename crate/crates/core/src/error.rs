use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}:{line}: {message}", path.display())]
    ParseFile {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Encoding(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("non-finite score at batch index {index}")]
    Numeric { index: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
