use lqg_core::Error;
use serde::Serialize;
use serde_json::Value;

/// A failed run, classified by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration.
    Config(String),
    /// The insertion data fails the Seiberg bounds.
    Inadmissible { message: String, verdict: Option<Value> },
    /// A numerical procedure degenerated.
    Numerical(String),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    status: &'static str,
    kind: &'static str,
    exit_code: i32,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<&'a Value>,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Inadmissible { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn to_json(&self) -> String {
        let (kind, message, verdict) = match self {
            CliError::Config(m) => ("configuration", m, None),
            CliError::Inadmissible { message, verdict } => ("inadmissible", message, verdict.as_ref()),
            CliError::Numerical(m) => ("numerical", m, None),
        };
        let report = ErrorReport {
            status: "error",
            kind,
            exit_code: self.exit_code(),
            message,
            verdict,
        };
        serde_json::to_string_pretty(&report).expect("error report serialises")
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Inadmissible(_) => CliError::Inadmissible { message, verdict: None },
            Error::Numerical(_) | Error::Factorization { .. } | Error::Singularity(_) => CliError::Numerical(message),
            Error::Domain(_)
            | Error::Parameter(_)
            | Error::Configuration(_)
            | Error::OverlappingCircles { .. }
            | Error::NotApplicable(_)
            | Error::Io(_)
            | Error::Json(_) => CliError::Config(message),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("invalid configuration: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
