//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input has {got} coordinates, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    DivergedTraining { epoch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point lies outside [0,1]^{d}")]
    OutsideDomain { d: usize },

    #[error("point violates the simplex membership chain by {violation:.3e}")]
    NotInSimplex { violation: f64 },

    #[error("split would leave an empty part ({n_first}/{n_second} subjects)")]
    InvalidSplit { n_first: usize, n_second: usize },

    #[error("dataset has no responses")]
    MissingResponses,

    #[error("derivative oracle failed at vertex {vertex:?}")]
    OracleFailure { vertex: Vec<f64> },

    #[error("unsupported dimension {d} (maximum {max})")]
    UnsupportedDimension { d: usize, max: usize },

    #[error("{path}: dataset is empty")]
    EmptyDataset { path: String },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("preprocessing error: {0}")]
    Preprocess(String),

    #[error("{path}: bad model file: {msg}")]
    ModelFormat { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
