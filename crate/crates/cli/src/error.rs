use std::fmt::Display;

use thiserror::Error;
use vidfuse::baseline::BaselineError;
use vidfuse::context::ContextError;
use vidfuse::data::DataError;
use vidfuse::fusion::FusionError;
use vidfuse::linalg::ShapeError;
use vidfuse::lstm::LstmError;
use vidfuse::metrics::MetricsError;
use vidfuse::scorefusion::ScoreFusionError;
use vidfuse::scores::ScoreError;

/// Failure class, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad command line or config (exit 1).
    Config,
    /// Unreadable, malformed or inconsistent data (exit 2).
    Data,
    /// Divergence or a failed gradient check (exit 3).
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct RunError {
    pub stage: String,
    pub kind: ErrorKind,
    pub message: String,
}

impl RunError {
    pub fn new(stage: impl Into<String>, kind: ErrorKind, message: impl Display) -> Self {
        Self {
            stage: stage.into(),
            kind,
            message: message.to_string(),
        }
    }

    pub fn config(stage: impl Into<String>, message: impl Display) -> Self {
        Self::new(stage, ErrorKind::Config, message)
    }

    pub fn data(stage: impl Into<String>, message: impl Display) -> Self {
        Self::new(stage, ErrorKind::Data, message)
    }

    pub fn io(stage: impl Into<String>, path: &std::path::Path, err: std::io::Error) -> Self {
        Self::data(stage, format!("{}: {err}", path.display()))
    }
}

pub trait Classify: Display {
    fn kind(&self) -> ErrorKind;
}

impl Classify for DataError {
    fn kind(&self) -> ErrorKind {
        match self {
            DataError::Synth(_) | DataError::Fractions(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for LstmError {
    fn kind(&self) -> ErrorKind {
        match self {
            LstmError::NonFiniteLoss { .. } => ErrorKind::Numerical,
            LstmError::Config(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for FusionError {
    fn kind(&self) -> ErrorKind {
        match self {
            FusionError::Divergence { .. } => ErrorKind::Numerical,
            FusionError::Config(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for BaselineError {
    fn kind(&self) -> ErrorKind {
        match self {
            BaselineError::Divergence { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {
        $(impl Classify for $t {
            fn kind(&self) -> ErrorKind {
                ErrorKind::Data
            }
        })*
    };
}

data_errors!(
    ContextError,
    MetricsError,
    ScoreFusionError,
    ScoreError,
    ShapeError
);

/// `map_err` adapter that tags an error with its stage.
pub fn at<E: Classify>(stage: &str) -> impl FnOnce(E) -> RunError + '_ {
    move |e| RunError::new(stage, e.kind(), e)
}
