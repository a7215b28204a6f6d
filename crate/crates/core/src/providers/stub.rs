//! Deterministic offline providers.
//!
//! The embedding stub maps each text (and each whitespace token) to a unit
//! vector drawn from a ChaCha8 stream seeded by a SHA-256 of the text, so
//! vectors are identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    mean_of, EmbeddingProvider, EmbeddingRequest, EmbeddingResponse, GenerationProvider, GenerationRequest,
    GenerationResponse, ProviderError,
};
use crate::store;

#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dim: usize,
    seed: u64,
}

impl StubEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "stub dimension must be positive");
        StubEmbedder { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn hashed_unit(&self, kind: &str, text: &str) -> Vec<f64> {
        let digest = store::hash_fields([&self.seed.to_le_bytes()[..], kind.as_bytes(), text.as_bytes()]);
        let mut seed = [0u8; 32];
        hex::decode_to_slice(&digest, &mut seed).expect("sha256 hex is 32 bytes");
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }

    pub fn text_vector(&self, text: &str) -> Vec<f64> {
        self.hashed_unit("text", text)
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        self.hashed_unit("token", &token.to_lowercase())
    }
}

impl EmbeddingProvider for StubEmbedder {
    fn model_id(&self) -> String {
        format!("stub-embed-d{}-s{}", self.dim, self.seed)
    }

    fn embed(&self, request: &EmbeddingRequest) -> Result<EmbeddingResponse, ProviderError> {
        let vectors = request.texts.iter().map(|t| self.text_vector(t)).collect();
        let mut span_vectors = Vec::new();
        if !request.spans.is_empty() {
            if request.spans.len() != request.texts.len() {
                return Err(ProviderError::Protocol("spans length differs from texts".into()));
            }
            for (text, spans) in request.texts.iter().zip(&request.spans) {
                let toks: Vec<Vec<f64>> = text.split_whitespace().map(|t| self.token_vector(t)).collect();
                let pooled = spans
                    .iter()
                    .map(|span| {
                        let picked: Option<Vec<&[f64]>> =
                            span.iter().map(|&i| toks.get(i).map(Vec::as_slice)).collect();
                        picked
                            .and_then(mean_of)
                            .ok_or_else(|| ProviderError::Protocol(format!("span {span:?} out of range")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                span_vectors.push(pooled);
            }
        }
        Ok(EmbeddingResponse { vectors, span_vectors, token_vectors: Vec::new() })
    }
}

/// Echoes the event chain found in the user prompt inside a fixed sentence.
#[derive(Debug, Clone, Default)]
pub struct StubGenerator;

impl StubGenerator {
    fn chain_of(user: &str) -> Option<&str> {
        let start = user.find("Event Chain: ")? + "Event Chain: ".len();
        let rest = &user[start..];
        let end = rest.find(". Generate").unwrap_or(rest.len());
        Some(&rest[..end])
    }
}

impl GenerationProvider for StubGenerator {
    fn model_id(&self) -> String {
        "stub-generate".into()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        let chain =
            Self::chain_of(&request.user).ok_or_else(|| ProviderError::Protocol("no event chain in prompt".into()))?;
        Ok(GenerationResponse { text: format!("The article connects the events {chain}.") })
    }
}
