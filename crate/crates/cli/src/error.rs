use std::fmt;
use std::io;
use std::path::Path;

use pausepoint_client::ClientError;
use pausepoint_service::ServeError;
use serde::Serialize;

/// A failed command: a stable code, a human detail, and the exit status
/// its class maps to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliError {
    pub code: String,
    pub detail: String,
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn new(code: impl Into<String>, detail: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::NotFound {
            Self::new("missing-file", format!("{}: {e}", path.display()))
        } else {
            Self::new("io-error", format!("{}: {e}", path.display()))
        }
    }

    /// Process exit status for this error.
    ///
    /// | status | class |
    /// |---|---|
    /// | 1 | internal or unclassified |
    /// | 3 | invalid input: config, manifest, profile, rejected request |
    /// | 4 | missing file or I/O failure |
    /// | 5 | unknown or unpublished entity |
    /// | 6 | authentication or authorization |
    /// | 7 | conflict with current state |
    /// | 8 | environment: server unreachable, port in use, store locked |
    pub fn exit_code(&self) -> i32 {
        let code = self.code.as_str();
        match code {
            "missing-file" | "io-error" => 4,
            "unauthenticated" | "forbidden-role" | "session-not-owned" => 6,
            "transport-error" | "port-in-use" | "store-locked" | "timeout" => 8,
            "internal" | "decode-error" | "storage-error" | "artifact-unreadable" => 1,
            "unpublished" | "lesson-unpublished" => 5,
            _ if code.starts_with("unknown-") && code != "unknown-sort-key" && code != "unknown-mode" => 5,
            "lesson-published" | "session-terminal" | "duplicate-submission" | "version-conflict"
            | "not-yet-processed" => 7,
            _ => 3,
        }
    }

    /// The single-line JSON diagnostic written to stderr.
    pub fn diagnostic(&self) -> String {
        serde_json::to_string(self).expect("plain strings serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

impl std::error::Error for CliError {}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api { code, detail, .. } => CliError::new(code, detail),
            other => CliError::new(other.code(), other.to_string()),
        }
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl From<pausepoint_core::Error> for CliError {
    fn from(e: pausepoint_core::Error) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}
