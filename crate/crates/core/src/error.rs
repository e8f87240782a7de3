use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite {what} at t = {index}")]
    NonFinite { index: usize, what: &'static str },

    #[error(
        "exact enumeration over {paths:e} paths exceeds the 2^20 guard; \
         enumeration is a test oracle for tiny problems only"
    )]
    EnumerationTooLarge { paths: f64 },

    #[error(
        "antithetic trials need K in {{2, 3}}; for K >= 4 pairwise negative \
         association of the permuted displacement is not established (got K = {0})"
    )]
    UnsupportedTrials(usize),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("sweep {sweep}, {block} update: {source}")]
    Block {
        sweep: usize,
        block: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad input or configuration rather than by
    /// the numerics of a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Dimension(_)
                | Error::InvalidParameter(_)
                | Error::UnsupportedTrials(_)
                | Error::EnumerationTooLarge { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_block(self, sweep: usize, block: impl Into<String>) -> Self {
        Error::Block {
            sweep,
            block: block.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
