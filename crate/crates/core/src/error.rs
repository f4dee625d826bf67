use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not Hermitian (max deviation {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("{name} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitIndex { index: usize, n_qubits: usize },

    #[error("invalid Kraus channel: {0}")]
    InvalidChannel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cell (gamma index {i}, p index {j}): {source}")]
    Cell {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Usage(String),

    /// `--help` or `--version` was requested; carries the rendered text.
    #[error("{0}")]
    Help(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Help(_) => 0,
            Error::Io { .. } => 2,
            Error::Cell { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            min: 0.0,
            max: 1.0,
        })
    }
}
