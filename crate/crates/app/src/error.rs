use std::fmt;
use std::path::Path;

use serde::Serialize;

/// Exit-status class of a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Usage,
    Data,
    Backend,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Backend => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AppError {
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
}

impl AppError {
    pub fn new(kind: ErrorKind, code: &str, message: impl Into<String>) -> Self {
        AppError { kind, code: code.into(), message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, "usage", message)
    }

    pub fn data(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, code, message)
    }

    pub fn backend(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Backend, "backend", message)
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::data("io", format!("{}: {e}", path.display()))
    }

    /// The single-line JSON document written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for AppError {}

macro_rules! module_error {
    ($ty:ty, $module:literal) => {
        impl From<$ty> for AppError {
            fn from(e: $ty) -> Self {
                AppError::data($module, format!(concat!($module, ": {}"), e))
            }
        }
    };
}

module_error!(voc_core::corpus::CorpusError, "corpus");
module_error!(voc_core::dataset::DatasetError, "dataset");
module_error!(voc_core::coverage::CoverageError, "coverage");
module_error!(voc_core::winnow::WinnowError, "winnow");
module_error!(voc_core::jsonl::JsonlError, "input");

impl From<voc_core::study::StudyError> for AppError {
    fn from(e: voc_core::study::StudyError) -> Self {
        AppError::data(e.code(), format!("study: {e}"))
    }
}

impl From<voc_gateway::ConfigError> for AppError {
    fn from(e: voc_gateway::ConfigError) -> Self {
        AppError::usage(format!("backend config: {e}"))
    }
}

pub type AppResult<T> = Result<T, AppError>;
