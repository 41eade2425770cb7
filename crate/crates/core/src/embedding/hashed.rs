use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EmbeddingError, EmbeddingProvider};

/// Deterministic offline embedder: a bag-of-words random projection where
/// each lowercase token owns a hash-seeded random direction. Texts sharing
/// words land close together, which is enough structure for tests and demos.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    model_id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        HashEmbedder {
            dim,
            model_id: format!("hash-{dim}"),
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let lowered = text.to_lowercase();
        let mut tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push(&lowered);
        }
        let mut out = vec![0.0; self.dim];
        for token in tokens {
            let digest = Sha256::digest(token.as_bytes());
            let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for x in out.iter_mut() {
                *x += rng.gen_range(-1.0..1.0);
            }
        }
        out
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        texts
            .iter()
            .map(|t| {
                if t.is_empty() {
                    Err(EmbeddingError::EmptyText)
                } else {
                    Ok(self.embed_one(t))
                }
            })
            .collect()
    }
}
