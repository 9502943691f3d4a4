use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum PilError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {col}: cannot read {value:?} as a number")]
    Parse { row: usize, col: usize, value: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown class label {0:?}")]
    UnknownClass(String),

    #[error("input matrix already carries a bias column")]
    AlreadyAugmented,

    #[error("model format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl PilError {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        PilError::ShapeMismatch {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T, E = PilError> = std::result::Result<T, E>;
