use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad or unknown configuration key. `line` is 1-based when known.
    #[error("{}", schema_message(.key, *.line, .message))]
    SchemaViolation { key: String, line: Option<usize>, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("column `{0}` is not in the CSV header")]
    MissingColumn(String),

    #[error("{found} rows in the fit group, need at least {needed}")]
    TooFewRows { needed: usize, found: usize },

    /// `row` is the 1-based line number in the file, header included.
    #[error("cannot parse `{value}` at line {row}, column `{column}` as a number")]
    UnparseableCell { row: usize, column: String, value: String },

    #[error(transparent)]
    Model(#[from] berm_core::Error),

    #[error("every suite cell failed; see errors.csv")]
    AllCellsFailed,
}

fn schema_message(key: &str, line: Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("schema violation at line {l} (`{key}`): {message}"),
        None => format!("schema violation at `{key}`: {message}"),
    }
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub fn schema(key: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::SchemaViolation { key: key.into(), line: None, message: message.into() }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::SchemaViolation { .. } | HarnessError::MissingColumn(_) => 1,
            HarnessError::Io { .. }
            | HarnessError::Csv { .. }
            | HarnessError::TooFewRows { .. }
            | HarnessError::UnparseableCell { .. } => 2,
            HarnessError::Model(_) | HarnessError::AllCellsFailed => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
