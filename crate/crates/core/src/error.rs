use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = KbcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KbcError {
    /// A malformed record in one of the TSV/text formats.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// An unknown symbol when the vocabulary is frozen.
    #[error("unknown {kind} symbol `{symbol}`")]
    Vocabulary { kind: &'static str, symbol: String },

    /// Out-of-range ids, dimension mismatches, incompatible vocabularies.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid input data that is well-formed but inconsistent.
    #[error("input error: {0}")]
    Input(String),

    /// Bad configuration or flag combination.
    #[error("usage error: {0}")]
    Usage(String),

    /// Non-finite values during training.
    #[error("numerical failure at step {step}: {detail}")]
    Numerical { step: u64, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl KbcError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KbcError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        KbcError::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line tool: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            KbcError::Usage(_) => 1,
            KbcError::Numerical { .. } => 3,
            _ => 2,
        }
    }
}
