//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Two tensors have incompatible shapes for the named operation.
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An operation produced NaN or infinity from finite inputs.
    #[error("{op}: non-finite value in result")]
    NonFinite { op: &'static str },

    /// A scalar argument is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `backward` was called a second time on the same tape.
    #[error("backward already run on this tape")]
    BackwardTwice,

    /// `backward` was called on a non-scalar value.
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    /// An operation that needs at least one element got none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A tag index exceeds the tag inventory.
    #[error("tag index {index} out of range for {count} tags")]
    TagIndex { index: usize, count: usize },

    /// Corpus text that does not follow the 4-column format.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Configuration file or flag problem.
    #[error("config: {0}")]
    Config(String),

    /// Checkpoint integrity or version problem.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Tag inventories of a checkpoint and a corpus disagree.
    #[error("inventory mismatch: {0}")]
    InventoryMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
