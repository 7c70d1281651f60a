//! Crate-wide error type.
//!
//! Recoverable numerical conditions (singular innovation covariance,
//! degenerate model probabilities, likelihood underflow) are handled where
//! they occur and surface only as diagnostic counters; this enum covers the
//! failures a caller can actually act on.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FadeError {
    /// A frame/truth/event line that does not parse or violates a field
    /// invariant. `line` is 1-based within the input stream.
    #[error("line {line}: malformed record: {detail}")]
    MalformedRecord { line: usize, detail: String },

    /// Frame index or timestamp went backwards (or repeated).
    #[error("line {line}: frame index and time must be strictly increasing")]
    NonMonotoneTime { line: usize },

    /// A scenario script that cannot be simulated as written.
    #[error("invalid scenario script: {0}")]
    InvalidScript(String),

    /// Bad pipeline configuration (unknown key, out-of-range value, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FadeError {
    pub fn malformed(line: usize, detail: impl Into<String>) -> Self {
        FadeError::MalformedRecord {
            line,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FadeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code the CLI maps this error to: 1 for configuration and
    /// scenario errors the user can fix in their inputs' settings, 2 for
    /// broken data.
    pub fn exit_code(&self) -> i32 {
        match self {
            FadeError::Config(_) | FadeError::InvalidScript(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, FadeError>;
