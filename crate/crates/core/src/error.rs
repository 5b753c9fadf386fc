use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands disagree along a named axis.
    #[error("{op}: {axis} mismatch (expected {expected}, got {got})")]
    Shape {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    /// Malformed binary container; `offset` is the byte position where decoding stopped.
    #[error("{kind} format error at byte {offset}: {msg}")]
    Format {
        kind: &'static str,
        offset: u64,
        msg: String,
    },

    #[error("response does not cover band(s) {missing:?} nm")]
    Coverage { missing: Vec<f32> },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("duplicate image name `{0}`")]
    DuplicateName(String),

    #[error("no trained model for fold {0}")]
    MissingModel(usize),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("non-finite loss {loss} at iteration {iter}")]
    NonFinite { iter: u64, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image encode/decode: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, axis: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape {
            op,
            axis,
            expected,
            got,
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for validation failures, 2 for runtime
    /// or numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::Io { .. } | Error::Image(_) => 2,
            _ => 1,
        }
    }
}
