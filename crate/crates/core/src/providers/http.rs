//! JSON-over-HTTP providers.
//!
//! Embedding: `POST {"texts": [...], "spans": [...]}` -> `{"vectors": [[...]]}`
//! (plus `span_vectors` or `token_vectors` when spans were requested).
//! Generation: `POST {"system", "user", "max_tokens", "temperature"}` -> `{"text"}`.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    EmbeddingProvider, EmbeddingRequest, EmbeddingResponse, GenerationProvider, GenerationRequest, GenerationResponse,
    ProviderError,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_delay: Duration::from_millis(250), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Runs `op`, retrying retryable failures with exponential backoff.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.max_attempts => {
                    log::warn!("provider call failed (attempt {attempt}/{}): {e}", self.max_attempts);
                    thread::sleep(delay);
                    delay = (delay * 2).min(self.max_delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl InFlight {
    fn new(cap: usize) -> Self {
        InFlight { count: Mutex::new(0), freed: Condvar::new(), cap: cap.max(1) }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().unwrap();
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

struct JsonClient {
    endpoint: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    in_flight: InFlight,
}

impl JsonClient {
    fn new(endpoint: &str, retry: RetryPolicy, max_in_flight: usize, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        JsonClient { endpoint: endpoint.to_string(), agent, retry, in_flight: InFlight::new(max_in_flight) }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, ProviderError> {
        let _slot = self.in_flight.acquire();
        self.retry.run(|| {
            let mut resp = self
                .agent
                .post(&self.endpoint)
                .send_json(body)
                .map_err(|e| ProviderError::Unavailable(format!("{}: {e}", self.endpoint)))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(ProviderError::Unavailable(format!("{} returned {status}", self.endpoint)));
            }
            resp.body_mut()
                .read_json::<Resp>()
                .map_err(|e| ProviderError::Protocol(format!("malformed response from {}: {e}", self.endpoint)))
        })
    }
}

pub struct HttpEmbedder {
    client: JsonClient,
    model: String,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, model: &str) -> Self {
        Self::with_options(endpoint, model, RetryPolicy::default(), 8, Duration::from_secs(120))
    }

    pub fn with_options(
        endpoint: &str,
        model: &str,
        retry: RetryPolicy,
        max_in_flight: usize,
        timeout: Duration,
    ) -> Self {
        HttpEmbedder { client: JsonClient::new(endpoint, retry, max_in_flight, timeout), model: model.to_string() }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn model_id(&self) -> String {
        self.model.clone()
    }

    fn embed(&self, request: &EmbeddingRequest) -> Result<EmbeddingResponse, ProviderError> {
        self.client.post(request)
    }
}

pub struct HttpGenerator {
    client: JsonClient,
    model: String,
}

impl HttpGenerator {
    pub fn new(endpoint: &str, model: &str) -> Self {
        Self::with_options(endpoint, model, RetryPolicy::default(), 4, Duration::from_secs(300))
    }

    pub fn with_options(
        endpoint: &str,
        model: &str,
        retry: RetryPolicy,
        max_in_flight: usize,
        timeout: Duration,
    ) -> Self {
        HttpGenerator { client: JsonClient::new(endpoint, retry, max_in_flight, timeout), model: model.to_string() }
    }
}

impl GenerationProvider for HttpGenerator {
    fn model_id(&self) -> String {
        self.model.clone()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        let resp: GenerationResponse = self.client.post(request)?;
        if resp.text.trim().is_empty() {
            return Err(ProviderError::EmptyGeneration);
        }
        Ok(resp)
    }
}

/// One validated embedding call against `endpoint` with default retry settings.
pub fn http_embed(endpoint: &str, model: &str, request: &EmbeddingRequest) -> Result<EmbeddingResponse, ProviderError> {
    super::embed_checked(&HttpEmbedder::new(endpoint, model), request)
}

/// One generation call against `endpoint` with default retry settings.
pub fn http_generate(
    endpoint: &str,
    model: &str,
    request: &GenerationRequest,
) -> Result<GenerationResponse, ProviderError> {
    HttpGenerator::new(endpoint, model).generate(request)
}
