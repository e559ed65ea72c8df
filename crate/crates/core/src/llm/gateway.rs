use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    cache_key, BackendError, CacheRecord, CompletionRequest, CompletionResult, LlmBackend,
    LlmError, ResponseCache,
};
use crate::sync::Semaphore;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMode {
    /// Serve hits, call the backend on misses and store the reply.
    #[default]
    ReadWrite,
    /// Serve hits only; a miss is an error. Pins runs to a recorded cache.
    Replay,
    /// Always call the backend; nothing is stored.
    Off,
}

impl fmt::Display for CacheMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CacheMode::ReadWrite => "read-write",
            CacheMode::Replay => "replay",
            CacheMode::Off => "off",
        })
    }
}

impl FromStr for CacheMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "read-write" | "record" | "rw" => Ok(CacheMode::ReadWrite),
            "replay" => Ok(CacheMode::Replay),
            "off" => Ok(CacheMode::Off),
            other => Err(format!("unknown cache mode `{other}` (read-write, replay, off)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_millis(250), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { max_retries: 0, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16)).min(self.max_delay)
    }
}

struct Registered {
    backend: Arc<dyn LlmBackend>,
    in_flight: Semaphore,
}

pub struct Gateway {
    backends: HashMap<String, Registered>,
    cache: Arc<ResponseCache>,
    mode: CacheMode,
    retry: RetryPolicy,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new(Arc::new(ResponseCache::in_memory()), CacheMode::ReadWrite)
    }
}

impl Gateway {
    pub fn new(cache: Arc<ResponseCache>, mode: CacheMode) -> Self {
        Self {
            backends: HashMap::new(),
            cache,
            mode,
            retry: RetryPolicy::default(),
            key_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Registers `backend` under `id` with at most `max_in_flight` concurrent calls.
    pub fn register(&mut self, id: impl Into<String>, backend: Arc<dyn LlmBackend>, max_in_flight: usize) {
        self.backends
            .insert(id.into(), Registered { backend, in_flight: Semaphore::new(max_in_flight) });
    }

    pub fn has_backend(&self, id: &str) -> bool {
        self.backends.contains_key(id)
    }

    pub fn backend_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.backends.keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().expect("key lock table poisoned");
        locks.entry(key.to_owned()).or_default().clone()
    }

    fn release_key(&self, key: &str, lock: Arc<Mutex<()>>) {
        let mut locks = self.key_locks.lock().expect("key lock table poisoned");
        // The table and this caller hold the only references: nobody waits.
        if Arc::strong_count(&lock) == 2 {
            locks.remove(key);
        }
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        request.validate()?;
        let registered = self
            .backends
            .get(&request.backend_id)
            .ok_or_else(|| LlmError::UnknownBackend(request.backend_id.clone()))?;
        if self.mode == CacheMode::Off {
            return self.call(registered, request).map(|(r, _)| r);
        }
        let key = cache_key(request);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit_result(hit));
        }
        if self.mode == CacheMode::Replay {
            return Err(LlmError::CacheMiss(key));
        }
        // Identical concurrent requests reach the provider once.
        let lock = self.key_lock(&key);
        let outcome = {
            let _guard = lock.lock().expect("key lock poisoned");
            match self.cache.get(&key) {
                Some(hit) => Ok(hit_result(hit)),
                None => self.call(registered, request).and_then(|(result, counts)| {
                    self.cache.insert(CacheRecord {
                        key: key.clone(),
                        backend_id: request.backend_id.clone(),
                        model_name: request.model_name.clone(),
                        text: result.text.clone(),
                        token_counts: counts,
                    })?;
                    Ok(result)
                }),
            }
        };
        self.release_key(&key, lock);
        outcome
    }

    fn call(
        &self,
        registered: &Registered,
        request: &CompletionRequest,
    ) -> Result<(CompletionResult, super::TokenCounts), LlmError> {
        let mut attempt = 0u32;
        loop {
            let started = Instant::now();
            let reply = {
                let _permit = registered.in_flight.acquire();
                registered.backend.complete(request)
            };
            match reply {
                Ok(reply) => {
                    let latency_ms = started.elapsed().as_millis().min(u64::MAX as u128) as u64;
                    let counts = reply.token_counts;
                    return Ok((
                        CompletionResult {
                            text: reply.text,
                            token_counts: counts,
                            latency_ms,
                            from_cache: false,
                        },
                        counts,
                    ));
                }
                Err(BackendError::Transient(message)) => {
                    if attempt >= self.retry.max_retries {
                        return Err(LlmError::Transport { attempts: attempt + 1, message });
                    }
                    let delay = self.retry.delay(attempt);
                    tracing::warn!(
                        backend = %request.backend_id,
                        attempt = attempt + 1,
                        "transient backend failure, retrying in {delay:?}: {message}"
                    );
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(BackendError::Rejected { status, message }) => {
                    return Err(LlmError::Provider { status, message })
                }
                Err(BackendError::Malformed(m)) => return Err(LlmError::Malformed(m)),
            }
        }
    }
}

fn hit_result(hit: CacheRecord) -> CompletionResult {
    CompletionResult { text: hit.text, token_counts: hit.token_counts, latency_ms: 0, from_cache: true }
}
