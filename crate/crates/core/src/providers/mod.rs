//! The external-service boundary: sentence/span encoders, text generators,
//! static word-vector tables, deterministic stubs and an on-disk cache.
//!
//! Every pipeline stage talks to encoders and generators only through the
//! [`EmbeddingProvider`] and [`GenerationProvider`] traits, so the whole
//! pipeline runs end-to-end against [`stub`] providers.

pub mod cache;
pub mod http;
pub mod static_table;
pub mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CachedEmbedder, CachedGenerator, DiskCache};
pub use http::{http_embed, http_generate, HttpEmbedder, HttpGenerator, RetryPolicy};
pub use static_table::StaticVectorTable;
pub use stub::{StubEmbedder, StubGenerator};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider protocol error: {0}")]
    Protocol(String),
    #[error("provider returned an empty generation")]
    EmptyGeneration,
    #[error("cache error: {0}")]
    Cache(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Unavailable(_))
    }
}

/// Indices of whitespace-separated tokens to pool into one vector.
pub type TokenSpan = Vec<usize>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub texts: Vec<String>,
    /// Per text, the spans to pool. Empty when no span vectors are needed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spans: Vec<Vec<TokenSpan>>,
}

impl EmbeddingRequest {
    pub fn texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        EmbeddingRequest { texts: texts.into_iter().map(Into::into).collect(), spans: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub vectors: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub span_vectors: Vec<Vec<Vec<f64>>>,
    /// Optional per-token vectors; used to pool spans client-side when the
    /// provider does not pool them itself.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub token_vectors: Vec<Vec<Vec<f64>>>,
}

impl EmbeddingResponse {
    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(Vec::len)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// Identifies the model; part of every cache key.
    fn model_id(&self) -> String;
    fn embed(&self, request: &EmbeddingRequest) -> Result<EmbeddingResponse, ProviderError>;
}

pub const DEFAULT_MAX_TOKENS: usize = 4096;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system: String,
    pub user: String,
    pub max_tokens: usize,
    pub temperature: f64,
}

impl GenerationRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        GenerationRequest {
            system: system.into(),
            user: user.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
}

pub trait GenerationProvider: Send + Sync {
    fn model_id(&self) -> String;
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError>;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn embed(&self, request: &EmbeddingRequest) -> Result<EmbeddingResponse, ProviderError> {
        (**self).embed(request)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<T> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn embed(&self, request: &EmbeddingRequest) -> Result<EmbeddingResponse, ProviderError> {
        (**self).embed(request)
    }
}

impl<T: GenerationProvider + ?Sized> GenerationProvider for &T {
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        (**self).generate(request)
    }
}

impl<T: GenerationProvider + ?Sized> GenerationProvider for Box<T> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        (**self).generate(request)
    }
}

pub fn mean_of<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for v in vectors {
        match &mut acc {
            None => acc = Some(v.to_vec()),
            Some(a) => {
                if a.len() != v.len() {
                    return None;
                }
                a.iter_mut().zip(v).for_each(|(x, y)| *x += y);
            }
        }
        n += 1;
    }
    acc.map(|mut a| {
        a.iter_mut().for_each(|x| *x /= n as f64);
        a
    })
}

/// Calls `provider` and validates the response shape. When spans were
/// requested but only token vectors came back, spans are pooled locally.
pub fn embed_checked(
    provider: &dyn EmbeddingProvider,
    request: &EmbeddingRequest,
) -> Result<EmbeddingResponse, ProviderError> {
    if request.texts.is_empty() {
        return Ok(EmbeddingResponse::default());
    }
    let mut resp = provider.embed(request)?;
    if resp.vectors.len() != request.texts.len() {
        return Err(ProviderError::Protocol(format!(
            "requested {} vectors, received {}",
            request.texts.len(),
            resp.vectors.len()
        )));
    }
    let dim = resp.dim().unwrap_or(0);
    if dim == 0 || resp.vectors.iter().any(|v| v.len() != dim) {
        return Err(ProviderError::Protocol("inconsistent vector dimensions".into()));
    }
    if resp.vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ProviderError::Protocol("non-finite vector entry".into()));
    }
    if request.spans.is_empty() {
        return Ok(resp);
    }
    if resp.span_vectors.is_empty() && !resp.token_vectors.is_empty() {
        resp.span_vectors = pool_spans(&request.spans, &resp.token_vectors)?;
    }
    if resp.span_vectors.len() != request.spans.len() {
        return Err(ProviderError::Protocol("span vectors missing from response".into()));
    }
    for (want, got) in request.spans.iter().zip(&resp.span_vectors) {
        if want.len() != got.len() || got.iter().any(|v| v.len() != dim) {
            return Err(ProviderError::Protocol("span vector shape mismatch".into()));
        }
    }
    Ok(resp)
}

fn pool_spans(spans: &[Vec<TokenSpan>], tokens: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<Vec<f64>>>, ProviderError> {
    if spans.len() != tokens.len() {
        return Err(ProviderError::Protocol("token vectors missing for some texts".into()));
    }
    spans
        .iter()
        .zip(tokens)
        .map(|(text_spans, toks)| {
            text_spans
                .iter()
                .map(|span| {
                    let picked: Option<Vec<&[f64]>> = span.iter().map(|&i| toks.get(i).map(Vec::as_slice)).collect();
                    picked
                        .and_then(mean_of)
                        .ok_or_else(|| ProviderError::Protocol(format!("cannot pool span {span:?}")))
                })
                .collect()
        })
        .collect()
}

/// Sentence vectors for `texts`, requested in batches of `batch_size`.
pub fn embed_texts(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>, ProviderError> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch_size.max(1)) {
        let resp = embed_checked(provider, &EmbeddingRequest::texts(chunk.iter().cloned()))?;
        out.extend(resp.vectors);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct TokenOnly;
    impl EmbeddingProvider for TokenOnly {
        fn model_id(&self) -> String {
            "token-only".into()
        }
        fn embed(&self, r: &EmbeddingRequest) -> Result<EmbeddingResponse, ProviderError> {
            Ok(EmbeddingResponse {
                vectors: r.texts.iter().map(|_| vec![1.0, 0.0]).collect(),
                span_vectors: vec![],
                token_vectors: r
                    .texts
                    .iter()
                    .map(|t| t.split_whitespace().enumerate().map(|(i, _)| vec![i as f64, 1.0]).collect())
                    .collect(),
            })
        }
    }

    #[test]
    fn spans_pool_client_side_from_token_vectors() {
        let req = EmbeddingRequest { texts: vec!["a b c".into()], spans: vec![vec![vec![0, 2], vec![1]]] };
        let resp = embed_checked(&TokenOnly, &req).unwrap();
        assert_eq!(resp.span_vectors[0], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn span_outside_tokens_is_protocol_error() {
        let req = EmbeddingRequest { texts: vec!["a".into()], spans: vec![vec![vec![3]]] };
        assert!(matches!(embed_checked(&TokenOnly, &req), Err(ProviderError::Protocol(_))));
    }

    #[test]
    fn wire_keys_are_exact() {
        let req = GenerationRequest::new("s", "u");
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v, serde_json::json!({"system": "s", "user": "u", "max_tokens": 4096, "temperature": 0.1}));
        let e = serde_json::to_value(EmbeddingRequest { texts: vec!["x".into()], spans: vec![vec![vec![0]]] }).unwrap();
        assert_eq!(e, serde_json::json!({"texts": ["x"], "spans": [[[0]]]}));
    }
}
