//! Text embeddings: provider abstraction, persistent cache, similarity.

mod cache;
mod hashed;
#[cfg(feature = "http")]
mod openai;

use std::collections::HashMap;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, EmbeddingCache};
pub use hashed::HashEmbedder;
#[cfg(feature = "http")]
pub use openai::{OpenAiEmbedder, API_KEY_ENV as OPENAI_API_KEY_ENV, DEFAULT_BASE_URL as OPENAI_BASE_URL};

use crate::jsonl::JsonlError;

pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-large";

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding provider rejected credentials: {0}")]
    AuthError(String),
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("similarity undefined for an all-zero vector")]
    ZeroVector,
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("embedding cache: {0}")]
    Cache(#[from] JsonlError),
}

impl EmbeddingError {
    fn is_transient(&self) -> bool {
        matches!(self, EmbeddingError::ProviderUnavailable(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub model_id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(model_id: impl Into<String>, values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(EmbeddingVector {
            model_id: model_id.into(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Anything that turns a batch of texts into vectors, one per text, in order.
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        (**self).embed(texts)
    }
}

/// Exponential backoff for transient provider failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            base_delay: Duration::ZERO,
        }
    }

    /// Runs `op`, retrying while `transient` says the error is worth retrying.
    pub fn run<T, E>(
        &self,
        transient: impl Fn(&E) -> bool,
        mut op: impl FnMut() -> Result<T, E>,
    ) -> Result<T, E> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if attempt < self.max_retries && transient(&e) => {
                    let delay = self.base_delay * 2u32.saturating_pow(attempt);
                    tracing::warn!(attempt, ?delay, "transient provider failure, retrying");
                    thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Cosine similarity of raw slices. Exactly symmetric; clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if !(dot.is_finite() && na.is_finite() && nb.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    // sqrt each norm separately so the product is symmetric in (a, b)
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    cosine(&a.values, &b.values)
}

/// Retrieval distance, `1 - cosine`.
pub fn distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    cosine_similarity(a, b).map(|s| 1.0 - s)
}

/// A provider fronted by the on-disk cache. Cache hits never reach the
/// provider.
pub struct CachedEmbedder<P> {
    provider: P,
    cache: EmbeddingCache,
    retry: RetryPolicy,
    batch_size: usize,
    max_in_flight: usize,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(provider: P, cache: EmbeddingCache) -> Self {
        CachedEmbedder {
            provider,
            cache,
            retry: RetryPolicy::default(),
            batch_size: 64,
            max_in_flight: 4,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        self.max_in_flight = max_in_flight.max(1);
        self
    }

    pub fn model_id(&self) -> &str {
        self.provider.model_id()
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut v = self.embed_many(&[text])?;
        Ok(v.pop().expect("one vector per text"))
    }

    /// Embeds every text, calling the provider only for cache misses. Misses
    /// are deduplicated and sent in batches, at most `max_in_flight` at once.
    pub fn embed_many(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let model = self.provider.model_id().to_string();
        let mut misses: Vec<String> = Vec::new();
        let mut queued = std::collections::HashSet::new();
        for t in texts {
            let key = CacheKey::new(&model, t);
            if self.cache.get(&key).is_none() && queued.insert(key) {
                misses.push(t.to_string());
            }
        }

        if !misses.is_empty() {
            let chunks: Vec<&[String]> = misses.chunks(self.batch_size).collect();
            for wave in chunks.chunks(self.max_in_flight) {
                let results: Vec<Result<(), EmbeddingError>> = thread::scope(|s| {
                    let handles: Vec<_> = wave
                        .iter()
                        .map(|chunk| s.spawn(|| self.fetch_chunk(&model, chunk)))
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("embedding worker panicked"))
                        .collect()
                });
                results.into_iter().collect::<Result<(), _>>()?;
            }
        }

        texts
            .iter()
            .map(|t| {
                let values = self
                    .cache
                    .get(&CacheKey::new(&model, t))
                    .expect("all misses were fetched");
                Ok(EmbeddingVector {
                    model_id: model.clone(),
                    values,
                })
            })
            .collect()
    }

    fn fetch_chunk(&self, model: &str, chunk: &[String]) -> Result<(), EmbeddingError> {
        let vectors = self
            .retry
            .run(EmbeddingError::is_transient, || self.provider.embed(chunk))?;
        if vectors.len() != chunk.len() {
            return Err(EmbeddingError::BadResponse(format!(
                "{} vectors for {} texts",
                vectors.len(),
                chunk.len()
            )));
        }
        for (text, values) in chunk.iter().zip(vectors) {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite);
            }
            self.cache.insert(CacheKey::new(model, text), values)?;
        }
        Ok(())
    }

    /// Embeds and returns a map from each given id to its vector.
    pub fn embed_map<'a>(
        &self,
        items: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<HashMap<String, EmbeddingVector>, EmbeddingError> {
        let (ids, texts): (Vec<&str>, Vec<&str>) = items.into_iter().unzip();
        let vectors = self.embed_many(&texts)?;
        Ok(ids.into_iter().map(String::from).zip(vectors).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new("m", values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&v(&[0.3, -2.0]), &v(&[0.3, -2.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let s = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        // dot = 1, |a| = sqrt 2, |b| = 1
        assert!((s - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((distance(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine(&[1.0, 2.0], &[1.0]),
            Err(EmbeddingError::DimensionMismatch { expected: 2, found: 1 })
        ));
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(EmbeddingError::ZeroVector)));
        assert!(EmbeddingVector::new("m", vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_properties(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..32),
            scale in 1e-3f64..1e3,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(a.iter().any(|x| *x != 0.0) && b.iter().any(|x| *x != 0.0));
            let ab = cosine(&a, &b).unwrap();
            prop_assert_eq!(ab.to_bits(), cosine(&b, &a).unwrap().to_bits());
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
            prop_assert!((cosine(&scaled, &b).unwrap() - ab).abs() <= 1e-9);
        }
    }

    struct Counting {
        inner: HashEmbedder,
        calls: Arc<AtomicUsize>,
    }

    impl EmbeddingProvider for Counting {
        fn model_id(&self) -> &str {
            self.inner.model_id()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.embed(texts)
        }
    }

    #[test]
    fn second_call_is_served_from_cache() {
        let calls = Arc::new(AtomicUsize::new(0));
        let e = CachedEmbedder::new(
            Counting {
                inner: HashEmbedder::new(16),
                calls: calls.clone(),
            },
            EmbeddingCache::in_memory(),
        );
        let a = e.embed_text("the same text").unwrap();
        let b = e.embed_text("the same text").unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        let bits = |v: &EmbeddingVector| v.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(matches!(e.embed_text(""), Err(EmbeddingError::EmptyText)));
    }

    #[test]
    fn batches_and_dedupes_misses() {
        let calls = Arc::new(AtomicUsize::new(0));
        let e = CachedEmbedder::new(
            Counting {
                inner: HashEmbedder::new(8),
                calls: calls.clone(),
            },
            EmbeddingCache::in_memory(),
        )
        .with_batch_size(3)
        .with_max_in_flight(2);
        let texts: Vec<String> = (0..10).map(|i| format!("text {}", i % 7)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let out = e.embed_many(&refs).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out[0], out[7]);
        // 7 distinct texts in batches of 3
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    struct Flaky {
        failures_left: AtomicUsize,
    }

    impl EmbeddingProvider for Flaky {
        fn model_id(&self) -> &str {
            "flaky"
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                return Err(EmbeddingError::ProviderUnavailable("503".into()));
            }
            Ok(texts.iter().map(|_| vec![1.0, 2.0]).collect())
        }
    }

    #[test]
    fn retries_transient_failures_then_gives_up() {
        let retry = RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(1),
        };
        let ok = CachedEmbedder::new(
            Flaky {
                failures_left: AtomicUsize::new(2),
            },
            EmbeddingCache::in_memory(),
        )
        .with_retry(retry);
        assert!(ok.embed_text("x").is_ok());

        let failing = CachedEmbedder::new(
            Flaky {
                failures_left: AtomicUsize::new(3),
            },
            EmbeddingCache::in_memory(),
        )
        .with_retry(retry);
        assert!(matches!(
            failing.embed_text("x"),
            Err(EmbeddingError::ProviderUnavailable(_))
        ));
    }
}
