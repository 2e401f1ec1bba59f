//! Crate-wide error type.

use crate::Branch;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A Cholesky pivot was non-positive or non-finite. Usually means the
    /// ridge term was too small or an accumulation was corrupted.
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid expansion spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite value in {context} at index {index}")]
    NonFiniteInput { context: &'static str, index: usize },

    /// Class weights are undefined when a class has no source samples.
    #[error("class {class} has no source samples; class weights are undefined")]
    EmptyClass { class: usize },

    #[error("no probability rows given for leader election")]
    EmptyInput,

    #[error("soft label size {n} out of range [1, {num_classes}]")]
    InvalidN { n: usize, num_classes: usize },

    #[error("empty batch for threshold update")]
    EmptyBatch,

    #[error("invalid severity {severity} for {kind} corruption")]
    InvalidSeverity { kind: &'static str, severity: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error("length mismatch: {context} has {found}, expected {expected}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// Forgetting cannot be measured before a baseline accuracy is recorded.
    #[error("baseline accuracy not recorded; initialize before measuring forgetting")]
    NotInitialized,

    #[error("branch {0} missing from model")]
    MissingBranch(Branch),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
