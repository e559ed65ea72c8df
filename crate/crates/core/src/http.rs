//! Minimal blocking HTTP seam shared by the live mapping, search and LLM
//! clients, so each can be exercised against recorded fixtures.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<Vec<u8>>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self { method: Method::Get, url: url.into(), headers: Vec::new(), body: None }
    }

    pub fn post_json(url: impl Into<String>, body: &serde_json::Value) -> Self {
        Self {
            method: Method::Post,
            url: url.into(),
            headers: vec![("content-type".into(), "application/json".into())],
            body: Some(serde_json::to_vec(body).expect("json value")),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

/// Failure to obtain any response at all (DNS, connect, timeout, I/O).
#[derive(Debug, Clone, thiserror::Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

pub trait HttpTransport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Live transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl HttpTransport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let result = match request.method {
            Method::Get => {
                let mut req = self.agent.get(&request.url);
                for (k, v) in &request.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.call()
            }
            Method::Post => {
                let mut req = self.agent.post(&request.url);
                for (k, v) in &request.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.send(request.body.as_deref().unwrap_or_default())
            }
        };
        let mut response = result.map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let body = response
            .body_mut()
            .with_config()
            .limit(32 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, content_type, body })
    }
}

/// One recorded request/response pair. Query parameters named in
/// [`REDACTED_PARAMS`] are stripped before matching, so recordings never
/// carry credentials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub method: Method,
    pub url: String,
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
    /// UTF-8 body, or base64 when prefixed with `base64:`.
    pub body: String,
}

pub const REDACTED_PARAMS: &[&str] = &["key", "api_key", "apikey", "token"];

/// Removes credential-bearing query parameters and normalises ordering.
pub fn redact_url(raw: &str) -> String {
    match url::Url::parse(raw) {
        Ok(mut url) => {
            let mut pairs: Vec<(String, String)> = url
                .query_pairs()
                .filter(|(k, _)| !REDACTED_PARAMS.contains(&k.as_ref()))
                .map(|(k, v)| (k.into_owned(), v.into_owned()))
                .collect();
            pairs.sort();
            if pairs.is_empty() {
                url.set_query(None);
            } else {
                url.query_pairs_mut().clear().extend_pairs(pairs);
            }
            url.to_string()
        }
        Err(_) => raw.to_owned(),
    }
}

fn encode_body(body: &[u8]) -> String {
    match std::str::from_utf8(body) {
        Ok(s) if !s.starts_with("base64:") => s.to_owned(),
        _ => {
            use base64::Engine;
            format!("base64:{}", base64::engine::general_purpose::STANDARD.encode(body))
        }
    }
}

fn decode_body(body: &str) -> Vec<u8> {
    match body.strip_prefix("base64:") {
        Some(b64) => {
            use base64::Engine;
            base64::engine::general_purpose::STANDARD.decode(b64).unwrap_or_default()
        }
        None => body.as_bytes().to_vec(),
    }
}

/// Serves responses from recorded interactions, matching on method and
/// redacted URL. Unmatched requests fail as transport errors.
pub struct ReplayTransport {
    interactions: Vec<Interaction>,
}

impl ReplayTransport {
    pub fn new(interactions: Vec<Interaction>) -> Self {
        Self { interactions }
    }

    /// Loads a line-delimited cassette file.
    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let file = File::open(path)?;
        let mut interactions = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            interactions.push(
                serde_json::from_str(&line)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?,
            );
        }
        Ok(Self::new(interactions))
    }
}

impl HttpTransport for ReplayTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let wanted = redact_url(&request.url);
        self.interactions
            .iter()
            .find(|i| i.method == request.method && redact_url(&i.url) == wanted)
            .map(|i| HttpResponse {
                status: i.status,
                content_type: i.content_type.clone(),
                body: decode_body(&i.body),
            })
            .ok_or_else(|| TransportError(format!("no recorded interaction for {wanted}")))
    }
}

/// Forwards to an inner transport and appends every exchange to a cassette.
pub struct RecordingTransport<T> {
    inner: T,
    sink: Mutex<File>,
}

impl<T: HttpTransport> RecordingTransport<T> {
    pub fn new(inner: T, cassette: &Path) -> std::io::Result<Self> {
        let sink = OpenOptions::new().create(true).append(true).open(cassette)?;
        Ok(Self { inner, sink: Mutex::new(sink) })
    }
}

impl<T: HttpTransport> HttpTransport for RecordingTransport<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let response = self.inner.send(request)?;
        let record = Interaction {
            method: request.method,
            url: redact_url(&request.url),
            status: response.status,
            content_type: response.content_type.clone(),
            body: encode_body(&response.body),
        };
        let mut line = serde_json::to_string(&record).expect("interaction");
        line.push('\n');
        let mut sink = self.sink.lock().expect("cassette lock poisoned");
        sink.write_all(line.as_bytes())
            .map_err(|e| TransportError(format!("recording cassette: {e}")))?;
        Ok(response)
    }
}
