//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or layer received data of an incompatible shape.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// A configuration value violates its invariants.
    #[error("invalid config: {0}")]
    Config(String),

    /// An input violates an operation's contract (e.g. a non-binary mask).
    #[error("contract violation in {context}: {detail}")]
    Contract {
        context: &'static str,
        detail: String,
    },

    /// A weights file is malformed; `field` names the offending record.
    #[error("weights file format error at `{field}`: {detail}")]
    Format { field: &'static str, detail: String },

    /// Training diverged to a non-finite loss or gradient.
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        what: String,
    },

    /// File-system failure with the path that caused it.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Image decode/encode failure.
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    /// Manifest CSV failure.
    #[error("manifest error on {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}
