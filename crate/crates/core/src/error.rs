//! Error type shared across the crate.
//!
//! The CLI maps these onto process exit codes: usage and dimension errors
//! exit 1, data/schema/parse errors exit 2, numeric aborts exit 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Tensor shapes incompatible with the requested operation.
    #[error("dimension mismatch: {context} (lhs {lhs:?}, rhs {rhs:?})")]
    Dimension {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller violated an API precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed or out-of-range data values.
    #[error("data error: {0}")]
    Data(String),

    /// Corpus or lexicon line failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Labels, vocabularies, or file layouts do not match declarations.
    #[error("schema error: {0}")]
    Schema(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn dimension(context: impl Into<String>, lhs: &[usize], rhs: &[usize]) -> Self {
        CoreError::Dimension {
            context: context.into(),
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Exit code the CLI uses for this error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::Usage(_) | CoreError::Dimension { .. } | CoreError::Domain(_) => 1,
            CoreError::Data(_)
            | CoreError::Parse { .. }
            | CoreError::Schema(_)
            | CoreError::Io(_) => 2,
            CoreError::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
