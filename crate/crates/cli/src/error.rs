use std::fmt;

use serde::Serialize;

/// Exit status 2: the inputs are wrong and retrying will not help.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status 1: something failed while running.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Validation,
    Runtime,
}

/// Error printed to stderr as JSON before exiting.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub class: ErrorClass,
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn validation(kind: &str, message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Validation, kind: kind.into(), message: message.into(), details: Vec::new() }
    }

    pub fn runtime(kind: &str, message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Runtime, kind: kind.into(), message: message.into(), details: Vec::new() }
    }

    pub fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Validation => EXIT_VALIDATION,
            ErrorClass::Runtime => EXIT_RUNTIME,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Maps an error into a runtime failure of the given kind.
pub fn runtime<E: fmt::Display>(kind: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::runtime(kind, e.to_string())
}

/// Maps an error into a validation failure of the given kind.
pub fn invalid<E: fmt::Display>(kind: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::validation(kind, e.to_string())
}
