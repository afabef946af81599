//! Uniform client for remote completion endpoints.
//!
//! A [`Gateway`] binds one [`EndpointConfig`] to a [`Transport`] and adds the
//! operational behaviour every pipeline stage relies on: a shared in-flight
//! limit, bounded retries with exponential backoff and full jitter, and
//! failures reported as values so one bad record never aborts a batch.

mod http;
mod limiter;
mod mock;

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use http::HttpTransport;
pub use limiter::{Limiter, Permit};
pub use mock::{MockAction, MockRule, MockScript, MockTransport};

use crate::error::{Error, Result};

const BACKOFF_CAP: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    /// `POST {base_url}/completions` with a raw prompt.
    #[default]
    Completion,
    /// `POST {base_url}/chat/completions`, the prompt wrapped as one user message.
    Chat,
}

/// Connection and retry settings for one model role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub api_style: ApiStyle,
    /// Base delay of the exponential backoff, in milliseconds.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    /// Serve this role from a scripted fixture instead of HTTP.
    #[serde(default)]
    pub mock_fixture: Option<PathBuf>,
}

fn default_timeout() -> f64 {
    120.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_concurrency() -> usize {
    8
}
fn default_retry_base_ms() -> u64 {
    1000
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model_name: String::new(),
            api_key_env: None,
            timeout_seconds: default_timeout(),
            max_retries: default_max_retries(),
            max_concurrency: default_max_concurrency(),
            api_style: ApiStyle::default(),
            retry_base_ms: default_retry_base_ms(),
            mock_fixture: None,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self, role: &str) -> Result<()> {
        if self.max_concurrency < 1 {
            return Err(Error::Config(format!(
                "endpoint `{role}`: max_concurrency must be >= 1"
            )));
        }
        if self.timeout_seconds.is_nan() || self.timeout_seconds <= 0.0 {
            return Err(Error::Config(format!(
                "endpoint `{role}`: timeout_seconds must be > 0"
            )));
        }
        if self.mock_fixture.is_none() && self.base_url.trim().is_empty() {
            return Err(Error::Config(format!(
                "endpoint `{role}`: base_url is required"
            )));
        }
        Ok(())
    }
}

/// Nucleus-sampling parameters for one generation call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
}

fn default_temperature() -> f64 {
    1.0
}
fn default_top_p() -> f64 {
    0.9
}
fn default_max_new_tokens() -> u32 {
    1024
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_new_tokens: default_max_new_tokens(),
        }
    }
}

impl SamplingParams {
    pub fn with_max_new_tokens(max_new_tokens: u32) -> Self {
        Self {
            max_new_tokens,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config("top_p must be in (0, 1]".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub request_id: String,
    pub prompt: String,
    pub params: SamplingParams,
}

impl LlmRequest {
    pub fn new(request_id: impl Into<String>, prompt: impl Into<String>, params: SamplingParams) -> Self {
        Self {
            request_id: request_id.into(),
            prompt: prompt.into(),
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResult {
    pub request_id: String,
    pub completion: Option<String>,
    pub attempts: u32,
    pub latency_ms: u64,
    pub failed: bool,
    pub failure_reason: Option<String>,
}

impl LlmResult {
    /// The completion text of a successful call.
    pub fn text(&self) -> Option<&str> {
        if self.failed {
            None
        } else {
            self.completion.as_deref()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Transport,
    Timeout,
    Server(u16),
    Client(u16),
    Malformed,
}

/// One failed exchange with an endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallError {
    pub kind: FailureKind,
    pub message: String,
}

impl CallError {
    pub fn new(kind: FailureKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    /// Client errors are final, except request-timeout and rate limiting.
    pub fn is_retryable(&self) -> bool {
        match self.kind {
            FailureKind::Client(code) => code == 408 || code == 429,
            _ => true,
        }
    }
}

impl fmt::Display for CallError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FailureKind::Transport => write!(f, "transport error: {}", self.message),
            FailureKind::Timeout => write!(f, "timeout: {}", self.message),
            FailureKind::Server(code) => write!(f, "server error {code}: {}", self.message),
            FailureKind::Client(code) => write!(f, "client error {code}: {}", self.message),
            FailureKind::Malformed => write!(f, "malformed response: {}", self.message),
        }
    }
}

/// The wire-level side of an endpoint. Implementations perform exactly one
/// exchange per call; retrying and limiting belong to [`Gateway`].
pub trait Transport: Send + Sync {
    fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<String, CallError>;

    fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f64>>, CallError> {
        Err(CallError::new(
            FailureKind::Client(501),
            "endpoint does not serve embeddings",
        ))
    }

    fn count_tokens(&self, _text: &str) -> Result<usize, CallError> {
        Err(CallError::new(
            FailureKind::Client(501),
            "endpoint does not serve tokenization",
        ))
    }
}

/// Exponential backoff with full jitter: attempt `n` (1-based) sleeps a
/// uniform draw from `[0, min(cap, base * 2^(n-1))]`.
#[derive(Debug, Clone, Copy)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
}

impl Backoff {
    pub fn ceiling(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base.saturating_mul(factor).min(self.cap)
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let ceiling = self.ceiling(attempt);
        if ceiling.is_zero() {
            return ceiling;
        }
        let millis = rand::thread_rng().gen_range(0..=ceiling.as_millis() as u64);
        Duration::from_millis(millis)
    }
}

pub struct Gateway {
    config: EndpointConfig,
    transport: Arc<dyn Transport>,
    limiter: Arc<Limiter>,
    backoff: Backoff,
    calls: AtomicUsize,
    name: String,
    last_error: Mutex<Option<String>>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("name", &self.name)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(name: impl Into<String>, config: EndpointConfig, transport: Arc<dyn Transport>) -> Self {
        let limiter = Arc::new(Limiter::new(config.max_concurrency.max(1)));
        let backoff = Backoff {
            base: Duration::from_millis(config.retry_base_ms),
            cap: BACKOFF_CAP,
        };
        Self {
            config,
            transport,
            limiter,
            backoff,
            calls: AtomicUsize::new(0),
            name: name.into(),
            last_error: Mutex::new(None),
        }
    }

    /// Builds the transport the config asks for: a scripted mock when
    /// `mock_fixture` is set, HTTP otherwise.
    pub fn from_config(name: impl Into<String>, config: EndpointConfig) -> Result<Self> {
        let name = name.into();
        config.validate(&name)?;
        let transport: Arc<dyn Transport> = match &config.mock_fixture {
            Some(path) => Arc::new(MockTransport::from_file(path)?),
            None => Arc::new(HttpTransport::new(&config)?),
        };
        Ok(Self::new(name, config, transport))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn max_concurrency(&self) -> usize {
        self.config.max_concurrency.max(1)
    }

    /// Number of transport exchanges attempted through this gateway.
    pub fn transport_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, CallError>) -> (Result<T, CallError>, u32) {
        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.limiter.acquire();
                self.calls.fetch_add(1, Ordering::SeqCst);
                call()
            };
            match outcome {
                Ok(value) => return (Ok(value), attempt),
                Err(err) if !err.is_retryable() || attempt >= max_attempts => {
                    *self.last_error.lock().unwrap() = Some(err.to_string());
                    return (Err(err), attempt);
                }
                Err(err) => {
                    tracing::debug!(endpoint = %self.name, attempt, error = %err, "retrying");
                    std::thread::sleep(self.backoff.delay(attempt));
                }
            }
        }
    }

    pub fn complete(&self, request: &LlmRequest) -> LlmResult {
        let started = Instant::now();
        if request.prompt.is_empty() {
            return LlmResult {
                request_id: request.request_id.clone(),
                completion: None,
                attempts: 1,
                latency_ms: 0,
                failed: true,
                failure_reason: Some("empty prompt".into()),
            };
        }
        let (outcome, attempts) =
            self.with_retries(|| self.transport.complete(&request.prompt, &request.params));
        let latency_ms = started.elapsed().as_millis() as u64;
        match outcome {
            Ok(completion) => LlmResult {
                request_id: request.request_id.clone(),
                completion: Some(completion),
                attempts,
                latency_ms,
                failed: false,
                failure_reason: None,
            },
            Err(err) => LlmResult {
                request_id: request.request_id.clone(),
                completion: None,
                attempts,
                latency_ms,
                failed: true,
                failure_reason: Some(err.to_string()),
            },
        }
    }

    /// Runs every request, at most `max_concurrency` in flight, and returns
    /// results in request order.
    pub fn complete_batch(&self, requests: &[LlmRequest]) -> Vec<LlmResult> {
        if requests.is_empty() {
            return Vec::new();
        }
        let workers = self.max_concurrency().min(requests.len());
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<LlmResult>>> = requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    let Some(request) = requests.get(index) else {
                        break;
                    };
                    let result = self.complete(request);
                    *slots[index].lock().unwrap() = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().unwrap().expect("every slot is filled"))
            .collect()
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let (outcome, attempts) = self.with_retries(|| self.transport.embed(texts));
        let vectors = outcome.map_err(|err| {
            Error::Endpoint(format!("{}: embedding failed after {attempts} attempts: {err}", self.name))
        })?;
        if vectors.len() != texts.len() {
            return Err(Error::Endpoint(format!(
                "{}: asked for {} embeddings, got {}",
                self.name,
                texts.len(),
                vectors.len()
            )));
        }
        Ok(vectors)
    }

    pub fn count_tokens(&self, text: &str) -> Result<usize> {
        let (outcome, attempts) = self.with_retries(|| self.transport.count_tokens(text));
        outcome.map_err(|err| {
            Error::Endpoint(format!("{}: tokenization failed after {attempts} attempts: {err}", self.name))
        })
    }
}
