//! Chat-completion access: response caching, retries, bounded batches.
//!
//! [`Gateway`] routes each [`ChatRequest`] to the [`Backend`] registered for its
//! model id. Responses are cached by a digest of the request content, so a
//! repeated request never reaches the backend twice.

mod cache;
pub(crate) mod http;
mod mock;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cache::ResponseCache;
pub use http::HttpBackend;
pub use mock::{
    mock_complete, mock_line_behavior, BehaviorProfile, GoldEntry, GoldTable, MarkerEffect, MockBackend, MOCK_STEP_BEHAVIORS,
    MOCK_STEP_LINES,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTag {
    pub prompt_id: String,
    pub benchmark_id: String,
    pub question_id: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Bookkeeping only; not part of the cache key.
    pub tag: RequestTag,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            tag: RequestTag::default(),
        }
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey::of(self)
    }
}

/// Hex SHA-256 over the request fields that determine the reply.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(pub String);

impl CacheKey {
    pub fn of(req: &ChatRequest) -> Self {
        #[derive(Serialize)]
        struct Keyed<'a> {
            model_id: &'a str,
            system_text: &'a str,
            user_text: &'a str,
            temperature: f64,
            max_output_tokens: u32,
        }
        Self(crate::io::json_digest(&Keyed {
            model_id: &req.model_id,
            system_text: &req.system_text,
            user_text: &req.user_text,
            temperature: req.temperature,
            max_output_tokens: req.max_output_tokens,
        }))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSource {
    /// Completion token count reported by the endpoint.
    Provider,
    /// Whitespace token count scaled by [`PROXY_TOKEN_FACTOR`].
    Proxy,
}

pub const PROXY_TOKEN_FACTOR: f64 = 1.3;

pub fn proxy_token_count(text: &str) -> u64 {
    (text.split_whitespace().count() as f64 * PROXY_TOKEN_FACTOR).round() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub completion_tokens: u64,
    pub token_source: TokenSource,
    pub finish_reason: String,
    pub latency_ms: u64,
}

/// What a backend returns before token accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub completion_tokens: Option<u64>,
    pub finish_reason: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CallError {
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed reply: {0}")]
    Malformed(String),
}

impl CallError {
    fn is_transient(&self) -> bool {
        match self {
            CallError::Status { code, .. } => *code == 429 || *code >= 500,
            CallError::Transport(_) => true,
            CallError::Malformed(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("no endpoint configured for model {0:?}")]
    UnknownModel(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: CallError },
    #[error("authentication failed (HTTP {code}): {body}")]
    Auth { code: u16, body: String },
    #[error("request rejected (HTTP {code}): {body}")]
    Rejected { code: u16, body: String },
    #[error("malformed endpoint reply: {0}")]
    Malformed(String),
    #[error("cache: {0}")]
    Cache(String),
}

pub trait Backend: Send + Sync {
    fn call(&self, req: &ChatRequest) -> Result<BackendReply, CallError>;
}

/// Anything that can answer a chat request.
pub trait Completer: Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// Results line up with `reqs`. The default runs them one at a time.
    fn complete_many(&self, reqs: &[ChatRequest], max_in_flight: usize) -> Vec<Result<ChatResponse, GatewayError>> {
        let _ = max_in_flight;
        reqs.iter().map(|r| self.complete(r)).collect()
    }
}

/// Exponential backoff with full jitter.
#[derive(Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    pub max_delay: Duration,
    sleep: Arc<dyn Fn(Duration) + Send + Sync>,
}

impl std::fmt::Debug for RetryPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RetryPolicy")
            .field("max_attempts", &self.max_attempts)
            .field("base_delay", &self.base_delay)
            .field("factor", &self.factor)
            .field("max_delay", &self.max_delay)
            .finish()
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            max_delay: Duration::from_secs(60),
            sleep: Arc::new(std::thread::sleep),
        }
    }
}

impl RetryPolicy {
    /// Same attempt budget, no waiting between attempts.
    pub fn immediate() -> Self {
        Self { base_delay: Duration::ZERO, sleep: Arc::new(|_| {}), ..Self::default() }
    }

    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    /// Upper bound of the jittered delay before retry number `retry` (0-based).
    pub fn delay_cap(&self, retry: u32) -> Duration {
        let scaled = self.base_delay.as_secs_f64() * self.factor.powi(retry as i32);
        Duration::from_secs_f64(scaled.min(self.max_delay.as_secs_f64()))
    }

    fn backoff(&self, retry: u32) {
        let cap = self.delay_cap(retry);
        if cap.is_zero() {
            (self.sleep)(Duration::ZERO);
            return;
        }
        let jittered = rand::rng().random_range(0.0..=cap.as_secs_f64());
        (self.sleep)(Duration::from_secs_f64(jittered));
    }
}

pub struct Gateway {
    backends: BTreeMap<String, Arc<dyn Backend>>,
    cache: ResponseCache,
    retry: RetryPolicy,
    backend_calls: AtomicUsize,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    /// Gateway with an in-memory cache and the default retry policy.
    pub fn new() -> Self {
        Self {
            backends: BTreeMap::new(),
            cache: ResponseCache::memory(),
            retry: RetryPolicy::default(),
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn register(&mut self, model_id: impl Into<String>, backend: Arc<dyn Backend>) {
        self.backends.insert(model_id.into(), backend);
    }

    pub fn with_backend(mut self, model_id: impl Into<String>, backend: Arc<dyn Backend>) -> Self {
        self.register(model_id, backend);
        self
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Number of attempts that reached a backend (cache hits excluded).
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let backend = self
            .backends
            .get(&req.model_id)
            .ok_or_else(|| GatewayError::UnknownModel(req.model_id.clone()))?;
        let key = req.cache_key();
        if let Some(hit) = self.cache.get(&req.model_id, &key).map_err(|e| GatewayError::Cache(e.to_string()))? {
            return Ok(hit);
        }
        let started = Instant::now();
        let mut attempt = 0;
        let reply = loop {
            attempt += 1;
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            match backend.call(req) {
                Ok(reply) => break reply,
                Err(CallError::Status { code, body }) if code == 401 || code == 403 => {
                    return Err(GatewayError::Auth { code, body })
                }
                Err(CallError::Malformed(m)) => return Err(GatewayError::Malformed(m)),
                Err(e) if !e.is_transient() => {
                    let CallError::Status { code, body } = e else { unreachable!() };
                    return Err(GatewayError::Rejected { code, body });
                }
                Err(e) if attempt >= self.retry.max_attempts => {
                    return Err(GatewayError::RetriesExhausted { attempts: attempt, last: e })
                }
                Err(_) => self.retry.backoff(attempt - 1),
            }
        };
        let (completion_tokens, token_source) = match reply.completion_tokens {
            Some(n) => (n, TokenSource::Provider),
            None => (proxy_token_count(&reply.text), TokenSource::Proxy),
        };
        let response = ChatResponse {
            text: reply.text,
            completion_tokens,
            token_source,
            finish_reason: reply.finish_reason,
            latency_ms: started.elapsed().as_millis() as u64,
        };
        self.cache
            .put(req, &key, &response)
            .map_err(|e| GatewayError::Cache(e.to_string()))?;
        Ok(response)
    }

    /// Runs requests with at most `max_in_flight` outstanding. Results line up
    /// with `reqs`; a failing request does not abort the others.
    pub fn complete_batch(&self, reqs: &[ChatRequest], max_in_flight: usize) -> Vec<Result<ChatResponse, GatewayError>> {
        let workers = max_in_flight.max(1).min(reqs.len());
        if workers <= 1 {
            return reqs.iter().map(|r| self.complete(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<ChatResponse, GatewayError>>>> = Mutex::new(vec![None; reqs.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let result = self.complete(&reqs[i]);
                    slots.lock().expect("slots lock")[i] = Some(result);
                });
            }
        });
        slots
            .into_inner()
            .expect("slots lock")
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect()
    }
}

impl Completer for Gateway {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        Gateway::complete(self, req)
    }

    fn complete_many(&self, reqs: &[ChatRequest], max_in_flight: usize) -> Vec<Result<ChatResponse, GatewayError>> {
        self.complete_batch(reqs, max_in_flight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted {
        script: Mutex<Vec<Result<BackendReply, CallError>>>,
    }

    impl Backend for Scripted {
        fn call(&self, _req: &ChatRequest) -> Result<BackendReply, CallError> {
            self.script.lock().unwrap().remove(0)
        }
    }

    fn ok(text: &str) -> Result<BackendReply, CallError> {
        Ok(BackendReply { text: text.into(), completion_tokens: Some(3), finish_reason: "stop".into() })
    }

    fn status(code: u16) -> Result<BackendReply, CallError> {
        Err(CallError::Status { code, body: String::new() })
    }

    fn gateway(script: Vec<Result<BackendReply, CallError>>) -> Gateway {
        Gateway::new()
            .with_retry(RetryPolicy::immediate())
            .with_backend("m", Arc::new(Scripted { script: Mutex::new(script) }))
    }

    #[test]
    fn second_identical_request_hits_cache() {
        let gw = gateway(vec![ok("hello")]);
        let req = ChatRequest::new("m", "sys", "user");
        let a = gw.complete(&req).unwrap();
        let b = gw.complete(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(gw.backend_calls(), 1);
    }

    #[test]
    fn transient_errors_are_retried() {
        let gw = gateway(vec![status(500), status(500), ok("fine")]);
        let resp = gw.complete(&ChatRequest::new("m", "", "q")).unwrap();
        assert_eq!(resp.text, "fine");
        assert_eq!(gw.backend_calls(), 3);
    }

    #[test]
    fn retry_budget_is_five_attempts() {
        let gw = gateway(vec![status(503); 6]);
        match gw.complete(&ChatRequest::new("m", "", "q")) {
            Err(GatewayError::RetriesExhausted { attempts, .. }) => assert_eq!(attempts, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn client_errors_are_not_retried() {
        let gw = gateway(vec![status(401), ok("never")]);
        assert!(matches!(gw.complete(&ChatRequest::new("m", "", "q")), Err(GatewayError::Auth { code: 401, .. })));
        assert_eq!(gw.backend_calls(), 1);

        let gw = gateway(vec![status(400)]);
        assert!(matches!(gw.complete(&ChatRequest::new("m", "", "q")), Err(GatewayError::Rejected { code: 400, .. })));

        let gw = gateway(vec![status(429), ok("later")]);
        assert_eq!(gw.complete(&ChatRequest::new("m", "", "q")).unwrap().text, "later");
    }

    #[test]
    fn unknown_model_is_a_configuration_error() {
        let gw = gateway(vec![]);
        assert_eq!(
            gw.complete(&ChatRequest::new("nope", "", "q")),
            Err(GatewayError::UnknownModel("nope".into()))
        );
    }

    #[test]
    fn proxy_tokens_when_provider_is_silent() {
        let gw = gateway(vec![Ok(BackendReply { text: "a b c d e f g h i j".into(), completion_tokens: None, finish_reason: "stop".into() })]);
        let resp = gw.complete(&ChatRequest::new("m", "", "q")).unwrap();
        assert_eq!(resp.token_source, TokenSource::Proxy);
        assert_eq!(resp.completion_tokens, 13);
    }

    #[test]
    fn cache_key_covers_every_field() {
        let base = ChatRequest::new("m", "s", "u");
        let mut variants = vec![base.clone()];
        let mut r = base.clone();
        r.model_id = "m2".into();
        variants.push(r);
        let mut r = base.clone();
        r.system_text = "s2".into();
        variants.push(r);
        let mut r = base.clone();
        r.user_text = "u2".into();
        variants.push(r);
        let mut r = base.clone();
        r.temperature = 0.5;
        variants.push(r);
        let mut r = base.clone();
        r.max_output_tokens = 7;
        variants.push(r);
        let keys: std::collections::HashSet<_> = variants.iter().map(ChatRequest::cache_key).collect();
        assert_eq!(keys.len(), variants.len());

        let mut tagged = base.clone();
        tagged.tag.question_id = "q9".into();
        assert_eq!(tagged.cache_key(), base.cache_key());
    }

    #[test]
    fn backoff_caps_grow_geometrically() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_cap(0), Duration::from_secs(1));
        assert_eq!(p.delay_cap(3), Duration::from_secs(8));
        let slept = Arc::new(Mutex::new(Vec::new()));
        let log = slept.clone();
        let gw = Gateway::new()
            .with_retry(RetryPolicy::default().with_sleeper(move |d| log.lock().unwrap().push(d)))
            .with_backend("m", Arc::new(Scripted { script: Mutex::new(vec![status(500), status(502), ok("x")]) }));
        gw.complete(&ChatRequest::new("m", "", "q")).unwrap();
        let slept = slept.lock().unwrap();
        assert_eq!(slept.len(), 2);
        assert!(slept[0] <= Duration::from_secs(1));
        assert!(slept[1] <= Duration::from_secs(2));
    }
}
