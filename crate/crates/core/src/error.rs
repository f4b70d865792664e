//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by dataset construction, profiling, training, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("label column {column:?} has {distinct} distinct values; only binary labels are supported")]
    UnsupportedMulticlass { column: String, distinct: usize },

    #[error("no rows remain after dropping tuples with missing values")]
    EmptyDataset,

    #[error("dataset has {n} rows; splitting requires at least {min}")]
    DatasetTooSmall { n: usize, min: usize },

    #[error("{context}: need at least {min} tuples, got {got}")]
    InsufficientData {
        context: &'static str,
        min: usize,
        got: usize,
    },

    #[error("group {group} / label {label} cell has {got} tuples; {needed} required")]
    InsufficientGroupData {
        group: u8,
        label: u8,
        got: usize,
        needed: usize,
    },

    #[error("training subset contains a single label class")]
    DegenerateLabels,

    #[error("invalid weights: {0}")]
    InvalidWeight(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("constraint-set family is empty")]
    EmptyFamily,

    #[error("evaluation requires both groups; group {0} is absent")]
    MissingGroup(u8),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    InvalidNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("serialization failure: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
