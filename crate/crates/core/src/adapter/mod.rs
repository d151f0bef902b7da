//! Line-delimited JSON protocol for external ASR / embedding / denoise
//! sidecars, with an in-process mock.
//!
//! Each request is one JSON object on its own line:
//!
//! ```text
//! {"id":1,"op":"asr","audio_path":"seg/0001.wav","language":"en","params":{}}
//! ```
//!
//! and each response echoes the id:
//!
//! ```text
//! {"id":1,"ok":true,"result":"hello world","error":null}
//! ```
//!
//! `{"op":"shutdown"}` asks the sidecar to exit with status 0.

mod client;
mod mock;
mod pool;
mod process;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::language::Language;

pub use client::{LineClient, Transport, DEFAULT_MAX_RETRIES, DEFAULT_TIMEOUT};
pub use mock::{mock_adapter, serve_lines, MockAdapter, MockFixtures, DEFAULT_EMBED_DIM};
pub use pool::{AdapterPool, PooledSession};
pub use process::{spawn_sidecar, ChildTransport};

/// Environment variable naming the sidecar launch command.
pub const ADAPTER_CMD_ENV: &str = "DUBPAIR_ADAPTER_CMD";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Asr,
    Embed,
    Denoise,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Asr => "asr",
            Op::Embed => "embed",
            Op::Denoise => "denoise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub id: u64,
    pub op: Op,
    pub audio_path: PathBuf,
    #[serde(default)]
    pub language: Option<Language>,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl AdapterRequest {
    pub fn new(id: u64, op: Op, audio_path: impl Into<PathBuf>, language: Option<Language>) -> Self {
        Self {
            id,
            op,
            audio_path: audio_path.into(),
            language,
            params: BTreeMap::new(),
        }
    }

    /// Op-specific checks run before anything is sent.
    pub fn validate(&self) -> Result<(), AdapterError> {
        let invalid = |reason: String| AdapterError::InvalidRequest { id: self.id, reason };
        if self.op == Op::Asr && self.language.is_none() {
            return Err(invalid("asr requires a language".into()));
        }
        if self.audio_path.as_os_str().is_empty() {
            return Err(invalid("empty audio_path".into()));
        }
        if let Some(k) = self.params.keys().find(|k| k.is_empty()) {
            return Err(invalid(format!("empty parameter name {k:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterResponse {
    pub id: u64,
    pub ok: bool,
    #[serde(default)]
    pub result: Option<serde_json::Value>,
    #[serde(default)]
    pub error: Option<String>,
}

impl AdapterResponse {
    pub fn success(id: u64, result: serde_json::Value) -> Self {
        Self {
            id,
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    pub fn failure(id: u64, message: impl Into<String>) -> Self {
        Self {
            id,
            ok: false,
            result: None,
            error: Some(message.into()),
        }
    }

    /// `ok` must agree with the presence of a result.
    pub fn is_well_formed(&self) -> bool {
        self.ok == self.result.is_some()
    }

    fn into_result(self) -> Result<serde_json::Value, AdapterError> {
        match (self.ok, self.result) {
            (true, Some(v)) => Ok(v),
            _ => Err(AdapterError::Remote {
                id: self.id,
                message: self.error.unwrap_or_else(|| "unspecified adapter failure".into()),
            }),
        }
    }

    pub fn into_text(self) -> Result<String, AdapterError> {
        let id = self.id;
        match self.into_result()? {
            serde_json::Value::String(s) => Ok(s),
            other => Err(AdapterError::Malformed {
                id,
                line: other.to_string(),
                reason: "expected a string result".into(),
            }),
        }
    }

    pub fn into_vector(self) -> Result<Vec<f64>, AdapterError> {
        let id = self.id;
        let value = self.into_result()?;
        serde_json::from_value(value.clone()).map_err(|_| AdapterError::Malformed {
            id,
            line: value.to_string(),
            reason: "expected a numeric array result".into(),
        })
    }

    pub fn into_path(self) -> Result<PathBuf, AdapterError> {
        self.into_text().map(PathBuf::from)
    }
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("request {id}: invalid request: {reason}")]
    InvalidRequest { id: u64, reason: String },

    #[error("request {id}: timed out after {attempts} attempt(s)")]
    Timeout { id: u64, attempts: u32 },

    #[error("request {id}: sidecar exited ({status})")]
    SidecarExited { id: u64, status: String },

    #[error("request {id}: malformed response {line:?}: {reason}")]
    Malformed { id: u64, line: String, reason: String },

    #[error("request {expected}: response carried unexpected id {got}")]
    IdMismatch { expected: u64, got: u64 },

    #[error("request {id}: adapter reported failure: {message}")]
    Remote { id: u64, message: String },

    #[error("sidecar i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("could not start sidecar {command:?}: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
}

impl AdapterError {
    /// Timeouts may succeed on a later attempt; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(self, AdapterError::Timeout { .. })
    }
}

/// A live connection to one adapter, real or mocked.
///
/// Sessions allocate request ids themselves so ids stay unique and
/// increasing within a session.
pub trait AdapterSession: Send {
    fn call(
        &mut self,
        op: Op,
        audio_path: &Path,
        language: Option<Language>,
        params: BTreeMap<String, String>,
    ) -> Result<AdapterResponse, AdapterError>;

    fn shutdown(&mut self) -> Result<(), AdapterError> {
        Ok(())
    }

    fn transcribe(&mut self, audio_path: &Path, language: Language) -> Result<String, AdapterError> {
        self.call(Op::Asr, audio_path, Some(language), BTreeMap::new())?.into_text()
    }

    fn embed(&mut self, audio_path: &Path) -> Result<Vec<f64>, AdapterError> {
        self.call(Op::Embed, audio_path, None, BTreeMap::new())?.into_vector()
    }

    fn denoise(&mut self, audio_path: &Path) -> Result<PathBuf, AdapterError> {
        self.call(Op::Denoise, audio_path, None, BTreeMap::new())?.into_path()
    }
}
