//! HTTP-backed solvers.
//!
//! Provider adapters wrap the canonical prompt in each vendor's request
//! shape (chat vs text generation) and pull the completion text back out.
//! The canonical prompt, not the wrapped body, is what gets hashed and cached.

use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::cache::{self, CacheMetadata, ResponseCache};
use super::{QueryError, RawResponse, SolverBackend, SolverId, SolverRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provider {
    /// Chat-completions style (`messages` in, `choices[0].message.content` out).
    /// Also covers OpenAI-compatible hosts serving open-weight models.
    OpenaiChat,
    /// Text generation with a `prompt.text` body (`candidates[0].output` out).
    PalmText,
    /// Generate endpoint (`generations[0].text` out).
    CohereGenerate,
}

impl Provider {
    pub fn default_endpoint(self) -> &'static str {
        match self {
            Provider::OpenaiChat => "https://api.openai.com/v1/chat/completions",
            Provider::PalmText => "https://generativelanguage.googleapis.com/v1beta2",
            Provider::CohereGenerate => "https://api.cohere.ai/v1/generate",
        }
    }

    /// Builds the HTTP call for a prompt. `api_key` never leaves this value.
    pub fn build_call(self, endpoint: &str, model: &str, api_key: &str, prompt: &str, params: &super::RequestParams) -> HttpCall {
        let mut body = serde_json::Map::new();
        let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
        let url = match self {
            Provider::OpenaiChat => {
                body.insert("model".into(), json!(model));
                body.insert("messages".into(), json!([{ "role": "user", "content": prompt }]));
                headers.push(("Authorization".into(), format!("Bearer {api_key}")));
                endpoint.to_string()
            }
            Provider::PalmText => {
                body.insert("prompt".into(), json!({ "text": prompt }));
                body.insert("candidateCount".into(), json!(1));
                format!("{}/models/{}:generateText?key={}", endpoint.trim_end_matches('/'), model, api_key)
            }
            Provider::CohereGenerate => {
                body.insert("model".into(), json!(model));
                body.insert("prompt".into(), json!(prompt));
                headers.push(("Authorization".into(), format!("Bearer {api_key}")));
                endpoint.to_string()
            }
        };
        for (key, value) in params {
            let key = match (self, key.as_str()) {
                (_, "paradigm") => continue,
                (Provider::PalmText, "max_tokens") => "maxOutputTokens",
                (_, k) => k,
            };
            body.insert(key.to_string(), value.clone());
        }
        HttpCall { url, headers, body: Value::Object(body) }
    }

    /// Pulls the completion text out of a provider response body.
    pub fn extract_text(self, body: &Value) -> Option<String> {
        let text = match self {
            Provider::OpenaiChat => body.pointer("/choices/0/message/content"),
            Provider::PalmText => body.pointer("/candidates/0/output"),
            Provider::CohereGenerate => body.pointer("/generations/0/text"),
        };
        text.and_then(Value::as_str).map(str::to_string)
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provider::OpenaiChat => "openai-chat",
            Provider::PalmText => "palm-text",
            Provider::CohereGenerate => "cohere-generate",
        })
    }
}

#[derive(Clone, PartialEq)]
pub struct HttpCall {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

// Custom Debug so credentials in headers or query strings are never printed.
impl fmt::Debug for HttpCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let url = self.url.split('?').next().unwrap_or("");
        let headers: Vec<&str> = self.headers.iter().map(|(k, _)| k.as_str()).collect();
        f.debug_struct("HttpCall").field("url", &url).field("headers", &headers).field("body", &self.body).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportFault {
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
}

impl TransportFault {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportFault::Network(_) | TransportFault::RateLimited => true,
            TransportFault::Status { status, .. } => *status >= 500,
            TransportFault::Auth(_) => false,
        }
    }

    fn from_status(reply: HttpReply) -> Result<HttpReply, TransportFault> {
        match reply.status {
            200..=299 => Ok(reply),
            401 | 403 => Err(TransportFault::Auth(reply.status)),
            429 => Err(TransportFault::RateLimited),
            status => Err(TransportFault::Status { status, body: reply.body.chars().take(200).collect() }),
        }
    }
}

/// Minimal blocking JSON POST interface, so tests can inject fakes.
pub trait HttpTransport: Send + Sync {
    fn post_json(&self, call: &HttpCall) -> Result<HttpReply, TransportFault>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        UreqTransport::new(Duration::from_secs(120))
    }
}

impl HttpTransport for UreqTransport {
    fn post_json(&self, call: &HttpCall) -> Result<HttpReply, TransportFault> {
        let mut request = self.agent.post(&call.url);
        for (k, v) in &call.headers {
            request = request.header(k, v);
        }
        let mut response = request.send_json(&call.body).map_err(|e| TransportFault::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| TransportFault::Network(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

/// Bounded retries with exponential backoff plus jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(20) }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Delay before retry number `attempt` (1 = first retry).
    pub fn backoff(&self, attempt: u32) -> Duration {
        if self.base_delay.is_zero() {
            return Duration::ZERO;
        }
        let exp = self.base_delay.saturating_mul(1u32 << attempt.saturating_sub(1).min(16));
        let jitter_ms = rand::rng().random_range(0..=self.base_delay.as_millis() as u64);
        (exp + Duration::from_millis(jitter_ms)).min(self.max_delay)
    }
}

/// Counting semaphore capping outstanding requests to one provider.
/// Counting semaphore bounding concurrent requests. Clones share one budget.
#[derive(Clone)]
pub struct InFlightLimit(Arc<LimitState>);

struct LimitState {
    available: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimit {
    pub fn new(limit: usize) -> Self {
        InFlightLimit(Arc::new(LimitState { available: Mutex::new(limit.max(1)), freed: Condvar::new() }))
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.0.available.lock().expect("limiter lock");
        while *n == 0 {
            n = self.0.freed.wait(n).expect("limiter lock");
        }
        *n -= 1;
        InFlightGuard { limit: &self.0 }
    }
}

impl std::fmt::Debug for InFlightLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = *self.0.available.lock().expect("limiter lock");
        f.debug_struct("InFlightLimit").field("available", &n).finish()
    }
}

struct InFlightGuard<'a> {
    limit: &'a LimitState,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.limit.available.lock().expect("limiter lock") += 1;
        self.limit.freed.notify_one();
    }
}

/// One shared [`InFlightLimit`] per provider; the first request for a
/// provider fixes its budget.
#[derive(Debug, Default)]
pub struct ProviderLimits {
    limits: Mutex<std::collections::HashMap<Provider, InFlightLimit>>,
}

impl ProviderLimits {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, provider: Provider, limit: usize) -> InFlightLimit {
        self.limits.lock().expect("provider limits lock").entry(provider).or_insert_with(|| InFlightLimit::new(limit)).clone()
    }
}

pub struct LiveBackend {
    solver: SolverId,
    provider: Provider,
    endpoint: String,
    model: String,
    api_key: String,
    transport: Arc<dyn HttpTransport>,
    retry: RetryPolicy,
    cache: Option<ResponseCache>,
    limit: InFlightLimit,
}

impl LiveBackend {
    pub fn new(
        solver: SolverId,
        provider: Provider,
        endpoint: Option<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
        transport: Arc<dyn HttpTransport>,
    ) -> Self {
        LiveBackend {
            endpoint: endpoint.unwrap_or_else(|| provider.default_endpoint().to_string()),
            solver,
            provider,
            model: model.into(),
            api_key: api_key.into(),
            transport,
            retry: RetryPolicy::default(),
            cache: None,
            limit: InFlightLimit::new(4),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Responses are written here before `query` returns.
    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.limit = InFlightLimit::new(limit);
        self
    }

    /// Shares an existing budget, typically one per provider.
    pub fn with_limit(mut self, limit: InFlightLimit) -> Self {
        self.limit = limit;
        self
    }

    fn attempt(&self, call: &HttpCall) -> Result<HttpReply, TransportFault> {
        let _slot = self.limit.acquire();
        self.transport.post_json(call).and_then(TransportFault::from_status)
    }
}

impl SolverBackend for LiveBackend {
    fn solver(&self) -> &SolverId {
        &self.solver
    }

    fn query(&self, request: &SolverRequest) -> Result<RawResponse, QueryError> {
        let call = self.provider.build_call(&self.endpoint, &self.model, &self.api_key, &request.prompt, &request.params);
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = request.attempt.max(1);
        let reply = loop {
            match self.attempt(&call) {
                Ok(reply) => break reply,
                Err(fault) if fault.is_retryable() && attempt < max_attempts => {
                    std::thread::sleep(self.retry.backoff(attempt));
                    attempt += 1;
                }
                Err(fault) => {
                    return Err(QueryError::Transport {
                        solver: self.solver.name().to_string(),
                        case_id: request.case_id.clone(),
                        attempts: attempt,
                        fault,
                    })
                }
            }
        };
        let body: Value = serde_json::from_str(&reply.body)
            .map_err(|e| QueryError::BadPayload { solver: self.solver.name().to_string(), message: e.to_string() })?;
        let text = self.provider.extract_text(&body).ok_or_else(|| QueryError::BadPayload {
            solver: self.solver.name().to_string(),
            message: format!("no completion text in {} response", self.provider),
        })?;
        if let Some(cache) = &self.cache {
            let meta = CacheMetadata {
                solver: self.solver.name().to_string(),
                kind: self.solver.kind(),
                case_id: request.case_id.clone(),
                prompt_sha256: cache::prompt_hash(&request.prompt),
                params: request.params.clone(),
                attempts: attempt,
                timestamp: cache::unix_now(),
            };
            cache.put(&text, &meta)?;
        }
        Ok(RawResponse { text, attempts: attempt })
    }
}
