//! Run configuration shared by every pipeline step.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agents::DEFAULT_CHAT_MODEL;
use crate::decision::Domain;
use crate::embedding::DEFAULT_EMBEDDING_MODEL;
use crate::evaluation::DEFAULT_K_SET;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("k_set must be a non-empty subset of 1..={k_max}, got {k_set:?}")]
    BadKSet { k_set: Vec<usize>, k_max: usize },
    #[error("{0} must be positive")]
    NotPositive(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingProviderKind {
    /// Offline hashed bag-of-words projection.
    Hash,
    OpenAi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatProviderKind {
    /// Offline deterministic replies.
    Fake,
    OpenAi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingProviderKind,
    /// Model id for remote providers.
    pub model: String,
    /// Vector size for the hash provider.
    pub dim: usize,
    pub base_url: Option<String>,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: EmbeddingProviderKind::Hash,
            model: DEFAULT_EMBEDDING_MODEL.into(),
            dim: 256,
            base_url: None,
            batch_size: 64,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatConfig {
    pub provider: ChatProviderKind,
    pub model: String,
    pub base_url: Option<String>,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig {
            provider: ChatProviderKind::Fake,
            model: DEFAULT_CHAT_MODEL.into(),
            base_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub workdir: PathBuf,
    pub domain: Domain,
    /// Restricts every step to these groups; empty means all groups.
    pub groups: Vec<String>,
    pub seed: u64,
    pub batch_size: usize,
    pub k_max: usize,
    pub k_set: Vec<usize>,
    /// Agent calls in flight at once.
    pub concurrency: usize,
    pub embedding: EmbeddingConfig,
    pub chat: ChatConfig,
    /// Annotators per batch and condition in the annotation service.
    pub quota: usize,
    pub port: u16,
    pub static_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            workdir: PathBuf::from("clg-work"),
            domain: Domain::Mod,
            groups: Vec::new(),
            seed: 0,
            batch_size: 10,
            k_max: 15,
            k_set: DEFAULT_K_SET.to_vec(),
            concurrency: 4,
            embedding: EmbeddingConfig::default(),
            chat: ChatConfig::default(),
            quota: 3,
            port: 8080,
            static_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("k_max", self.k_max),
            ("batch_size", self.batch_size),
            ("concurrency", self.concurrency),
            ("quota", self.quota),
            ("embedding.dim", self.embedding.dim),
            ("embedding.batch_size", self.embedding.batch_size),
            ("embedding.max_in_flight", self.embedding.max_in_flight),
        ] {
            if v == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.k_set.is_empty() || self.k_set.iter().any(|&k| k == 0 || k > self.k_max) {
            return Err(ConfigError::BadKSet {
                k_set: self.k_set.clone(),
                k_max: self.k_max,
            });
        }
        Ok(())
    }

    /// Model id the embedding provider will report.
    pub fn embedding_model_id(&self) -> String {
        match self.embedding.provider {
            EmbeddingProviderKind::Hash => format!("hash-{}", self.embedding.dim),
            EmbeddingProviderKind::OpenAi => self.embedding.model.clone(),
        }
    }

    pub fn wants_group(&self, group_id: &str) -> bool {
        self.groups.is_empty() || self.groups.iter().any(|g| g == group_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert_eq!(c.validate(), Ok(()));
        c.k_set = vec![1, 20];
        assert!(matches!(c.validate(), Err(ConfigError::BadKSet { .. })));
        c.k_set = vec![];
        assert!(matches!(c.validate(), Err(ConfigError::BadKSet { .. })));
        let c = RunConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert_eq!(c.validate(), Err(ConfigError::NotPositive("batch_size")));
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"domain":"toxicity","k_max":10,"k_set":[1,5,10]}"#).unwrap();
        assert_eq!(c.domain, Domain::Toxicity);
        assert_eq!(c.batch_size, 10);
        assert_eq!(c.embedding_model_id(), "hash-256");
        assert!(serde_json::from_str::<RunConfig>(r#"{"nope":1}"#).is_err());
    }
}
