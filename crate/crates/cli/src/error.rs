use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// Malformed input file; `line` is 1-based, 0 when no single line is at fault.
    #[error("{}", ingest_message(file, *line, message))]
    Ingest { file: String, line: u64, message: String },

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

    #[error("{0}")]
    Numerical(#[from] poolreg::Error),

    #[error("locations {locations}: {source}")]
    AtLocations {
        locations: String,
        #[source]
        source: poolreg::Error,
    },

    /// Some locations could not be fitted; outputs were still written.
    #[error("{0} location(s) failed to fit")]
    PartialFit(usize),
}

fn ingest_message(file: &str, line: u64, message: &str) -> String {
    if line == 0 {
        format!("{file}: {message}")
    } else {
        format!("{file}, line {line}: {message}")
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) | CliError::AtLocations { .. } | CliError::PartialFit(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
