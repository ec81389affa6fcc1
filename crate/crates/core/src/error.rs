use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate statistics in stratum {stratum}: {reason}")]
    Degenerate { stratum: usize, reason: String },

    #[error("non-finite update at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX file {path}: needed {needed} bytes at offset {offset}, {available} available")]
    IdxTruncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("IDX dimension mismatch in {path}: {detail}")]
    IdxDimension { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
