//! Error type shared by every module of the core crate.

use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two arrays that must agree on a dimension do not.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// Input values violate a precondition (non-finite entries, out-of-range values, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// An operation was invoked in the wrong order, e.g. backward before forward.
    #[error("invalid state: {0}")]
    State(String),

    /// A semi-supervised-only operation was called on an unsupervised model, or vice versa.
    #[error("operation `{op}` requires {required} mode")]
    Mode {
        op: &'static str,
        required: &'static str,
    },

    /// Training produced a non-finite loss.
    #[error("non-finite {loss} loss at epoch {epoch}, batch {batch}: {value}")]
    NonFinite {
        loss: &'static str,
        epoch: usize,
        batch: usize,
        value: f64,
    },

    /// Configuration values are out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A record file has an unexpected header.
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    /// A single record could not be parsed.
    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// Feature layout of a model does not match the vocabulary used to encode its input.
    #[error("feature layout mismatch: model expects {expected}, data has {actual}")]
    LayoutMismatch { expected: String, actual: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
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

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
