use thiserror::Error;

use crate::algebra::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("validation failed: {}", .0.summary())]
    Validation(Box<ValidationReport>),
    #[error("schema error in `{field}`: {msg}")]
    Schema { field: String, msg: String },
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("rank deficiency: {0}")]
    RankDeficiency(String),
    #[error("certification failure: {0}")]
    Certification(String),
    #[error("lattice error: {0}")]
    Lattice(String),
    #[error("tile budget exceeded: {0}")]
    TileBudget(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Structural(_)
            | Error::Validation(_)
            | Error::Schema { .. }
            | Error::Parse { .. }
            | Error::Io(_) => 2,
            Error::Lattice(_) => 2,
            Error::Domain(_) | Error::RankDeficiency(_) | Error::Certification(_) => 3,
            Error::TileBudget(_) => 1,
        }
    }
}
