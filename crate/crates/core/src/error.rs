use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("non-uniform time grid: {0}")]
    Grid(String),

    #[error("degenerate channel `{channel}`: zero variance")]
    DegenerateChannel { channel: String },

    #[error("degenerate reference: channel {channel} has zero standard deviation")]
    DegenerateReference { channel: usize },

    #[error("trajectory diverged at step {step}")]
    Divergence { step: usize },

    #[error("ensemble failure: all {count} realizations were non-finite")]
    EnsembleFailure { count: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Coarse classification used by front ends to choose an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::Bounds(_) => ErrorKind::Config,
            Error::NumericalFailure(_)
            | Error::Divergence { .. }
            | Error::EnsembleFailure { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
