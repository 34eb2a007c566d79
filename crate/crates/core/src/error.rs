use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file is empty")]
    EmptyFile { path: String },

    #[error("{path}:{line}: {reason}")]
    MalformedRow {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("unknown {kind} token `{token}`")]
    UnknownToken { kind: &'static str, token: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("operation `{op}` requires phase {expected}, model is {actual}")]
    Phase {
        op: &'static str,
        expected: &'static str,
        actual: String,
    },

    #[error("loss must be a 1x1 tensor, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },

    #[error("gradient check rejected a nondeterministic closure: {0}")]
    Nondeterministic(&'static str),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint checksum mismatch (corrupt or truncated file)")]
    Checksum,

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("evaluation error: {0}")]
    Eval(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Short machine-readable category, used by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::EmptyFile { .. } | Error::MalformedRow { .. } | Error::UnknownToken { .. } => {
                "input"
            }
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non-finite",
            Error::Config(_) => "config",
            Error::Phase { .. } => "phase",
            Error::NotScalar { .. } | Error::Nondeterministic(_) => "numerics",
            Error::VersionMismatch { .. } | Error::Checksum | Error::Checkpoint(_) => "checkpoint",
            Error::Eval(_) => "eval",
        }
    }
}
