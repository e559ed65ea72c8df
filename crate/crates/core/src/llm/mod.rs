//! Chat-completion gateway: one request shape over pluggable backends, a
//! persistent response cache and deterministic mock backends.

mod cache;
mod gateway;
mod mock;
mod openai;

pub use cache::{CacheRecord, ResponseCache};
pub use gateway::{CacheMode, Gateway, RetryPolicy};
pub use mock::{MockBackend, MockScript, ScriptEntry};
pub use openai::{OpenAiCompatible, OpenAiConfig};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub backend_id: String,
    pub model_name: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CompletionRequest {
    pub fn new(backend_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            backend_id: backend_id.into(),
            model_name: String::new(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.is_empty() {
            return Err(LlmError::InvalidRequest("prompt is empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u32,
    pub output: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub token_counts: TokenCounts,
    pub latency_ms: u64,
    pub from_cache: bool,
}

/// What a backend returns for one call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub token_counts: TokenCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: connection failures, timeouts, 429 and 5xx.
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("provider rejected the request ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider error ({status}): {message}")]
    Provider { status: u16, message: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("no cached response for key {0} in replay mode")]
    CacheMiss(String),
    #[error("response cache: {0}")]
    Cache(String),
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError>;
}

/// Hex sha256 over the length-prefixed request fields. `-0.0` and `0.0`
/// temperatures hash alike.
pub fn cache_key(request: &CompletionRequest) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(request.backend_id.as_bytes());
    field(request.model_name.as_bytes());
    field(request.prompt.as_bytes());
    let t = if request.temperature == 0.0 { 0.0f64 } else { request.temperature };
    field(&t.to_bits().to_le_bytes());
    field(&request.max_output_tokens.to_le_bytes());
    hex::encode(h.finalize())
}

/// Whitespace token estimate for backends that report no usage.
pub(crate) fn rough_tokens(text: &str) -> u32 {
    text.split_whitespace().count().min(u32::MAX as usize) as u32
}
