use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("duplicate row for country {country}, year {year} (line {line})")]
    DuplicateRow { country: String, year: i32, line: u64 },
    #[error("dictionary variable {variable} has no column {column} in the data")]
    UnknownVariable { variable: String, column: String },
    #[error("non-numeric value {value:?} at line {line}, column {column}")]
    NonNumeric { line: u64, column: String, value: String },
    #[error("log1p on negative value {value} for country {country}, variable {variable}")]
    NegativeLog {
        country: String,
        variable: String,
        value: f64,
    },
    #[error("no observations to impute from: {}", format_pairs(.missing))]
    NoObservations { missing: Vec<(String, String)> },
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("column {variable} is constant")]
    ConstantColumn { variable: String },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is singular or near-singular (smallest eigenvalue {smallest_eigenvalue:e})")]
    Singular { smallest_eigenvalue: f64 },
    #[error("no correlations to assess")]
    NoCorrelations,
    #[error("Heywood case: communality of {variable} reached {communality}")]
    Heywood { variable: String, communality: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            Error::ConstantColumn { .. }
            | Error::NotSymmetric { .. }
            | Error::Singular { .. }
            | Error::NoCorrelations
            | Error::Heywood { .. }
            | Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(country, variable)| format!("{country}/{variable}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::Invalid(format!($($arg)*))
    };
}
pub(crate) use invalid;
