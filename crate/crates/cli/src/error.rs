//! CLI error type with per-class exit codes.

use thiserror::Error;

use crate::config::ParseError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error in {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ParseError,
    },

    #[error("{path}: row {row} has {got} cells, expected {expected}")]
    RaggedRows {
        path: String,
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("{path}: non-numeric cell '{text}' at row {row}, column {col}")]
    NonNumericCell {
        path: String,
        row: usize,
        col: usize,
        text: String,
    },

    #[error("{path}: survey value {value} at row {row}, column {col} outside [0, 1]")]
    SurveyOutOfRange {
        path: String,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("{path}: missing column '{name}'")]
    MissingColumn { path: String, name: String },

    #[error("{stage}: {source}")]
    Core {
        stage: &'static str,
        #[source]
        source: setid_core::Error,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Distinct exit code per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Usage(_) => 2,
            CliError::RaggedRows { .. }
            | CliError::NonNumericCell { .. }
            | CliError::SurveyOutOfRange { .. }
            | CliError::MissingColumn { .. } => 3,
            CliError::Core { stage, .. } => match *stage {
                "solve" | "filter" => 4,
                "estimate" => 5,
                "wedges" => 6,
                "test" => 7,
                _ => 4,
            },
            CliError::Io { .. } => 8,
        }
    }
}

pub fn core_err(stage: &'static str) -> impl Fn(setid_core::Error) -> CliError {
    move |source| CliError::Core { stage, source }
}

pub fn io_err(path: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_string(), source }
}
