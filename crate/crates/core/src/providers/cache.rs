//! Content-hash keyed response cache. Entries live at
//! `<dir>/<first two hex chars>/<hash>.json` and are written atomically.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    EmbeddingProvider, EmbeddingRequest, EmbeddingResponse, GenerationProvider, GenerationRequest, GenerationResponse,
    ProviderError,
};
use crate::store;

#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DiskCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        let prefix = key.get(..2).unwrap_or("xx");
        self.dir.join(prefix).join(format!("{key}.json"))
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) -> Result<(), ProviderError> {
        let bytes = serde_json::to_vec(value).map_err(|e| ProviderError::Cache(e.to_string()))?;
        store::atomic_write(&self.path_for(key), &bytes).map_err(|e| ProviderError::Cache(e.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.path_for(key).exists()
    }
}

fn request_key<T: Serialize>(kind: &str, model: &str, request: &T) -> Result<String, ProviderError> {
    let body = serde_json::to_vec(request).map_err(|e| ProviderError::Cache(e.to_string()))?;
    Ok(store::hash_fields([kind.as_bytes(), model.as_bytes(), &body]))
}

/// Serves repeated embedding requests from a [`DiskCache`].
pub struct CachedEmbedder<P> {
    inner: P,
    cache: DiskCache,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(inner: P, cache: DiskCache) -> Self {
        CachedEmbedder { inner, cache }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn model_id(&self) -> String {
        self.inner.model_id()
    }

    fn embed(&self, request: &EmbeddingRequest) -> Result<EmbeddingResponse, ProviderError> {
        let key = request_key("embed", &self.inner.model_id(), request)?;
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let resp = self.inner.embed(request)?;
        self.cache.put(&key, &resp)?;
        Ok(resp)
    }
}

/// Serves repeated generation requests from a [`DiskCache`].
pub struct CachedGenerator<P> {
    inner: P,
    cache: DiskCache,
}

impl<P: GenerationProvider> CachedGenerator<P> {
    pub fn new(inner: P, cache: DiskCache) -> Self {
        CachedGenerator { inner, cache }
    }
}

impl<P: GenerationProvider> GenerationProvider for CachedGenerator<P> {
    fn model_id(&self) -> String {
        self.inner.model_id()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, ProviderError> {
        let key = request_key("generate", &self.inner.model_id(), request)?;
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let resp = self.inner.generate(request)?;
        self.cache.put(&key, &resp)?;
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::StubEmbedder;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting<'a>(StubEmbedder, &'a AtomicUsize, &'static str);
    impl EmbeddingProvider for Counting<'_> {
        fn model_id(&self) -> String {
            self.2.into()
        }
        fn embed(&self, r: &EmbeddingRequest) -> Result<EmbeddingResponse, ProviderError> {
            self.1.fetch_add(1, Ordering::SeqCst);
            self.0.embed(r)
        }
    }

    #[test]
    fn repeat_is_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let calls = AtomicUsize::new(0);
        let p = CachedEmbedder::new(Counting(StubEmbedder::new(8, 1), &calls, "m1"), DiskCache::new(dir.path()));
        let req = EmbeddingRequest::texts(["a", "b"]);
        let first = p.embed(&req).unwrap();
        let second = p.embed(&req).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn model_change_misses_cache() {
        let dir = tempfile::tempdir().unwrap();
        let calls = AtomicUsize::new(0);
        let req = EmbeddingRequest::texts(["a"]);
        CachedEmbedder::new(Counting(StubEmbedder::new(8, 1), &calls, "m1"), DiskCache::new(dir.path()))
            .embed(&req)
            .unwrap();
        CachedEmbedder::new(Counting(StubEmbedder::new(8, 1), &calls, "m2"), DiskCache::new(dir.path()))
            .embed(&req)
            .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }
}
