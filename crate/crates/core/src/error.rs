use std::fmt;

use thiserror::Error;

/// Which data matrix an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Inputs,
    Outputs,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixKind::Inputs => f.write_str("X"),
            MatrixKind::Outputs => f.write_str("Y"),
        }
    }
}

#[derive(Debug, Error)]
pub enum HigtError {
    #[error("row {row} of {matrix} is constant (variance below 1e-12)")]
    ConstantRow { matrix: MatrixKind, row: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid group structure: {0}")]
    InvalidGroups(String),

    #[error("group structure has no input groups or no output groups")]
    EmptyGroups,

    #[error("expected a leaf node, got {0}")]
    NotLeaf(&'static str),

    #[error("expected an internal node, got {0}")]
    NotInternal(&'static str),

    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("infeasible simulation config: {0}")]
    InfeasibleConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HigtError>;
