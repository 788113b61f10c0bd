//! Error type shared across the crate.
//!
//! Recoverable conditions (I/O, malformed input, degenerate data, divergence)
//! are reported through [`Error`]. Shape mismatches on the numeric hot path
//! are programmer errors and panic via `assert!` instead.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset contains a single class")]
    SingleClass,

    #[error("feature '{0}' has zero variance in the fitting split")]
    ZeroVariance(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("class {class} has {count} samples, fewer than k = {k} folds")]
    ClassSmallerThanK { class: usize, count: usize, k: usize },

    #[error("minority class {class} has {count} samples; K = {neighbors} neighbors requires more than K")]
    MinorityTooSmall {
        class: usize,
        count: usize,
        neighbors: usize,
    },

    #[error("covariance input is not centered: row {row} has mean {mean:e}")]
    NotCentered { row: usize, mean: f64 },

    #[error("eigensolver did not converge within {0} sweeps")]
    EigenNoConvergence(usize),

    #[error("eigenvalue {0:e} is more negative than roundoff tolerance")]
    NegativeEigenvalue(f64),

    #[error("non-finite values produced in {0}")]
    NonFiniteStage(String),

    #[error("training diverged: non-finite loss at epoch {0}")]
    Divergence(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("parameter budget {0} is too small for one hidden unit")]
    BudgetTooSmall(usize),

    #[error("sample index {index} out of range ({count} samples)")]
    BadSampleIndex { index: usize, count: usize },

    #[error("class index {index} out of range ({count} classes)")]
    BadClassIndex { index: usize, count: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("unknown config key '{0}'")]
    UnknownConfigKey(String),

    #[error("artifact error: {0}")]
    Artifact(String),
}

pub type Result<T> = std::result::Result<T, Error>;
