use std::path::Path;
use std::process::ExitCode;

use maskrl::model::ValidationReport;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Config,
    Validation,
    Runtime,
}

impl Kind {
    fn code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Validation => 3,
            Kind::Runtime => 4,
        }
    }
}

/// Failure reported on stderr as one JSON object.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: Kind,
    pub code: u8,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub defects: Vec<String>,
}

impl CliError {
    fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            code: kind.code(),
            message: message.into(),
            defects: Vec::new(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Kind::Config, message)
    }

    pub fn config_from(e: maskrl::Error) -> Self {
        Self::config(e.to_string())
    }

    pub fn validation(report: ValidationReport) -> Self {
        let mut e = Self::new(Kind::Validation, format!("{} defect(s) found", report.defects.len()));
        e.defects = report.defects.iter().map(ToString::to_string).collect();
        e
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new(Kind::Runtime, format!("{}: {err}", path.display()))
    }

    /// Classifies a library error by what the user has to fix.
    pub fn runtime(e: maskrl::Error) -> Self {
        use maskrl::Error as E;
        match e {
            E::Validation(report) => Self::validation(report),
            E::Parameter(_) => Self::config(e.to_string()),
            E::Format(_) | E::Shape(_) | E::EmptyAdmissible { .. } => Self::new(Kind::Validation, e.to_string()),
            _ => Self::new(Kind::Runtime, e.to_string()),
        }
    }

    pub fn report(&self) -> ExitCode {
        let body = serde_json::json!({ "error": self });
        eprintln!("{body}");
        ExitCode::from(self.code)
    }
}
