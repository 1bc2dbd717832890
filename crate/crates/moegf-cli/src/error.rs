//! Error type and exit codes.

use std::fmt;

use moegf::relaxation::RelaxationError;
use moegf::slp::{ParamError, SlpError};
use moegf::InstanceError;
use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const HARD_ERROR: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
}

/// Error class, which fixes the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Validation,
    Hard,
}

/// Failure of a run, serialized as the error JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// Offending field or element, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl CliError {
    pub fn validation(message: impl Into<String>, field: Option<String>) -> Self {
        CliError { kind: ErrorKind::Validation, message: message.into(), field }
    }

    pub fn hard(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Hard, message: message.into(), field: None }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => exit::VALIDATION,
            ErrorKind::Hard => exit::HARD_ERROR,
        }
    }

    /// Single-line JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&serde_json::json!({ "error": self })).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Text between the first pair of backticks, as used by serde messages.
fn backticked(msg: &str) -> Option<String> {
    let a = msg.find('`')?;
    let b = msg[a + 1..].find('`')?;
    Some(msg[a + 1..a + 1 + b].to_string())
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        let msg = e.to_string();
        let field = backticked(&msg);
        CliError::validation(format!("malformed instance: {msg}"), field)
    }
}

impl From<InstanceError> for CliError {
    fn from(e: InstanceError) -> Self {
        let field = match &e {
            InstanceError::SchemaVersion(_) => Some("schema_version".to_string()),
            InstanceError::DanglingReference { id, .. } | InstanceError::DuplicateId { id, .. } => Some(id.clone()),
            InstanceError::PositivePressure(id)
            | InstanceError::CompressorRatio(id)
            | InstanceError::RegulatorRatio(id)
            | InstanceError::PipeGeometry(id) => Some(id.clone()),
            InstanceError::Invariant { id, .. } => Some(id.clone()),
        };
        CliError::validation(e.to_string(), field)
    }
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        let field = match e {
            ParamError::Epsilon(_) => "epsilon",
            ParamError::Gamma(_) => "gamma",
            ParamError::Alpha(..) => "alpha",
            ParamError::Sigma(_) => "sigma",
            ParamError::Beta(_) => "beta",
            ParamError::Kf => "kf",
            ParamError::Segments => "segments",
            ParamError::EnvelopePoints => "envelope_points",
        };
        CliError::validation(e.to_string(), Some(field.to_string()))
    }
}

impl From<SlpError> for CliError {
    fn from(e: SlpError) -> Self {
        match e {
            SlpError::Params(p) => p.into(),
            other => CliError::hard(other.to_string()),
        }
    }
}

impl From<RelaxationError> for CliError {
    fn from(e: RelaxationError) -> Self {
        CliError::hard(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::hard(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::hard(format!("csv: {e}"))
    }
}
