use std::path::PathBuf;

use thiserror::Error;

use crate::objective::FeasibilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    Config { field: String, reason: String },

    #[error("length mismatch: expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("{0}")]
    Usage(String),

    /// The backscatter path has zero gain or the near vehicle gets no power,
    /// so the reflection closed form is undefined.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(&'static str),

    #[error("cell is infeasible: no power split meets the QoS floor (probe: {report})")]
    Infeasible { report: Box<FeasibilityReport> },

    #[error("{} of {num_cells} cells infeasible: {cells:?}", cells.len())]
    NetworkInfeasible { cells: Vec<usize>, num_cells: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
