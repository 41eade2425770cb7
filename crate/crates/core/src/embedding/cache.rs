use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::jsonl::{self, JsonlError};

const CACHE_FILE: &str = "embeddings.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub model_id: String,
    /// Hex SHA-256 of the exact text bytes.
    pub text_hash: String,
}

impl CacheKey {
    pub fn new(model_id: &str, text: &str) -> Self {
        CacheKey {
            model_id: model_id.to_string(),
            text_hash: hex::encode(Sha256::digest(text.as_bytes())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    #[serde(flatten)]
    key: CacheKey,
    values: Vec<f64>,
}

/// Embedding store keyed by (model, text hash). Backed by an append-only
/// JSONL file when opened on a directory; reads are concurrent, appends are
/// serialized.
#[derive(Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, Vec<f64>>>,
    file: Option<Mutex<PathBuf>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> Result<Self, JsonlError> {
        fs::create_dir_all(dir).map_err(|source| JsonlError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join(CACHE_FILE);
        let entries: Vec<Entry> = jsonl::read_or_empty(&path)?;
        let map = entries.into_iter().map(|e| (e.key, e.values)).collect();
        Ok(EmbeddingCache {
            entries: RwLock::new(map),
            file: Some(Mutex::new(path)),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Vec<f64>> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts unless the key is present. Values are deterministic per key,
    /// so an existing entry is never overwritten.
    pub fn insert(&self, key: CacheKey, values: Vec<f64>) -> Result<(), JsonlError> {
        let guard = self.file.as_ref().map(|f| f.lock().expect("cache file lock"));
        if self.entries.read().expect("cache lock").contains_key(&key) {
            return Ok(());
        }
        if let Some(path) = guard.as_deref() {
            jsonl::append(
                path,
                &Entry {
                    key: key.clone(),
                    values: values.clone(),
                },
            )?;
        }
        self.entries.write().expect("cache lock").insert(key, values);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_model_and_exact_text() {
        assert_eq!(CacheKey::new("m", "abc"), CacheKey::new("m", "abc"));
        assert_ne!(CacheKey::new("m", "abc"), CacheKey::new("m", "abc "));
        assert_ne!(CacheKey::new("m", "abc"), CacheKey::new("n", "abc"));
    }

    #[test]
    fn persist_and_reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let values = vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567];
        {
            let cache = EmbeddingCache::open(dir.path()).unwrap();
            cache.insert(CacheKey::new("m", "hello"), values.clone()).unwrap();
            cache.insert(CacheKey::new("m", "hello"), vec![9.0]).unwrap();
        }
        let reloaded = EmbeddingCache::open(dir.path()).unwrap();
        assert_eq!(reloaded.len(), 1);
        let got = reloaded.get(&CacheKey::new("m", "hello")).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&got), bits(&values));
    }
}
