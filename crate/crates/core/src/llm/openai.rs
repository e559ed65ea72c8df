use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{rough_tokens, BackendError, BackendReply, CompletionRequest, LlmBackend, TokenCounts};
use crate::http::{HttpRequest, HttpTransport, UreqTransport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenAiConfig {
    /// Up to and including the version segment, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub auth_header: String,
    /// Prefix placed before the key in the auth header value.
    pub auth_scheme: String,
}

impl OpenAiConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            auth_header: "Authorization".into(),
            auth_scheme: "Bearer ".into(),
        }
    }

    /// Env prefix for a backend id: `gpt-4o` → `NEXTPOI_BACKEND_GPT_4O`.
    pub fn env_prefix(backend_id: &str) -> String {
        let id: String = backend_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
            .collect();
        format!("NEXTPOI_BACKEND_{id}")
    }

    /// Reads `<prefix>_BASE_URL`, `<prefix>_MODEL`, `<prefix>_API_KEY` and the
    /// optional `<prefix>_AUTH_HEADER` / `<prefix>_AUTH_SCHEME`.
    pub fn from_env(backend_id: &str) -> Option<Self> {
        Self::from_lookup(backend_id, |k| std::env::var(k).ok())
    }

    pub fn from_lookup(backend_id: &str, get: impl Fn(&str) -> Option<String>) -> Option<Self> {
        let p = Self::env_prefix(backend_id);
        let base_url = get(&format!("{p}_BASE_URL"))?;
        let model = get(&format!("{p}_MODEL"))?;
        let mut cfg = Self::new(base_url, model);
        cfg.api_key = get(&format!("{p}_API_KEY"));
        if let Some(h) = get(&format!("{p}_AUTH_HEADER")) {
            cfg.auth_header = h;
        }
        if let Some(s) = get(&format!("{p}_AUTH_SCHEME")) {
            cfg.auth_scheme = s;
        }
        Some(cfg)
    }
}

/// Client for the OpenAI-style `POST {base}/chat/completions` shape.
pub struct OpenAiCompatible {
    config: OpenAiConfig,
    transport: Arc<dyn HttpTransport>,
}

impl OpenAiCompatible {
    pub fn new(config: OpenAiConfig) -> Self {
        Self::with_transport(config, Arc::new(UreqTransport::new(Duration::from_secs(120))))
    }

    pub fn with_transport(config: OpenAiConfig, transport: Arc<dyn HttpTransport>) -> Self {
        Self { config, transport }
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    fn build(&self, request: &CompletionRequest) -> HttpRequest {
        let model =
            if request.model_name.is_empty() { &self.config.model } else { &request.model_name };
        let body = json!({
            "model": model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut http = HttpRequest::post_json(url, &body);
        if let Some(key) = &self.config.api_key {
            http = http.header(&self.config.auth_header, format!("{}{key}", self.config.auth_scheme));
        }
        http
    }
}

fn error_message(body: &[u8]) -> String {
    serde_json::from_slice::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/error/message").and_then(Value::as_str).map(str::to_owned))
        .unwrap_or_else(|| String::from_utf8_lossy(body).chars().take(500).collect())
}

impl LlmBackend for OpenAiCompatible {
    fn complete(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let response = self
            .transport
            .send(&self.build(request))
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        if response.status == 429 || response.status >= 500 {
            return Err(BackendError::Transient(format!(
                "status {}: {}",
                response.status,
                error_message(&response.body)
            )));
        }
        if !response.is_success() {
            return Err(BackendError::Rejected {
                status: response.status,
                message: error_message(&response.body),
            });
        }
        let v: Value = serde_json::from_slice(&response.body)
            .map_err(|e| BackendError::Malformed(format!("body is not JSON: {e}")))?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))?
            .to_owned();
        let usage = |field: &str, fallback: u32| {
            v.pointer(&format!("/usage/{field}"))
                .and_then(Value::as_u64)
                .map_or(fallback, |n| n.min(u32::MAX as u64) as u32)
        };
        let token_counts = TokenCounts {
            prompt: usage("prompt_tokens", rough_tokens(&request.prompt)),
            output: usage("completion_tokens", rough_tokens(&text)),
        };
        Ok(BackendReply { text, token_counts })
    }
}
