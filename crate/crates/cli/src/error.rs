use shapsel_core::{DatasetError, ModelError, SchemaError, SelectionError, ShapError, TrainError};
use thiserror::Error;

/// Exit status: 2 bad arguments, 3 I/O or parse failure, 4 statistical failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 2,
    Io = 3,
    Statistical = 4,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Io,
            message: message.into(),
        }
    }

    pub fn stat(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Statistical,
            message: message.into(),
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn context(mut self, what: impl std::fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::MissingTarget(_) | DatasetError::NoTarget => {
                CliError::usage(e.to_string())
            }
            _ => CliError::io(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<ShapError> for CliError {
    fn from(e: ShapError) -> Self {
        match e {
            ShapError::Columns(d) => d.into(),
            other => CliError::io(other.to_string()),
        }
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::Threshold(_) | SelectionError::L1Weight(_) => {
                CliError::usage(e.to_string())
            }
            SelectionError::Data(d) => d.into(),
            SelectionError::Shap(s) => s.into(),
            other => CliError::stat(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::MetricMismatch { .. } | TrainError::NoTarget => {
                CliError::usage(e.to_string())
            }
            TrainError::Model(_) | TrainError::MissingFeature(_) => CliError::io(e.to_string()),
            other => CliError::stat(other.to_string()),
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::io(format!("emitted file fails its schema: {e}"))
    }
}
