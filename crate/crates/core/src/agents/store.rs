use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::chat::ChatMessage;
use super::RuleDecisionRecord;
use crate::jsonl::{self, JsonlError};
use crate::synthesis::PrecedentSelection;

/// A per-(agent, judged case) output.
pub trait AgentRecord: Clone + Serialize + DeserializeOwned + Send {
    fn agent_id(&self) -> &str;
    fn judged_case_id(&self) -> &str;

    fn key(&self) -> (String, String) {
        (self.agent_id().to_string(), self.judged_case_id().to_string())
    }
}

impl AgentRecord for PrecedentSelection {
    fn agent_id(&self) -> &str {
        &self.agent_id
    }
    fn judged_case_id(&self) -> &str {
        &self.judged_case_id
    }
}

impl AgentRecord for RuleDecisionRecord {
    fn agent_id(&self) -> &str {
        &self.agent_id
    }
    fn judged_case_id(&self) -> &str {
        &self.judged_case_id
    }
}

/// Append-only record log, idempotent by (agent id, judged case id): the
/// first record for a key wins and later ones are ignored.
pub struct RecordStore<T> {
    path: Option<PathBuf>,
    records: Mutex<BTreeMap<(String, String), T>>,
}

impl<T: AgentRecord> RecordStore<T> {
    pub fn in_memory() -> Self {
        RecordStore {
            path: None,
            records: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let mut records = BTreeMap::new();
        for r in jsonl::read_log::<T>(path)? {
            records.entry(r.key()).or_insert(r);
        }
        Ok(RecordStore {
            path: Some(path.to_path_buf()),
            records: Mutex::new(records),
        })
    }

    pub fn contains(&self, agent_id: &str, judged_case_id: &str) -> bool {
        self.records
            .lock()
            .expect("store lock")
            .contains_key(&(agent_id.to_string(), judged_case_id.to_string()))
    }

    pub fn get(&self, agent_id: &str, judged_case_id: &str) -> Option<T> {
        self.records
            .lock()
            .expect("store lock")
            .get(&(agent_id.to_string(), judged_case_id.to_string()))
            .cloned()
    }

    /// Returns false when a record for the key already exists.
    pub fn insert(&self, record: T) -> Result<bool, JsonlError> {
        let mut records = self.records.lock().expect("store lock");
        let key = record.key();
        if records.contains_key(&key) {
            return Ok(false);
        }
        if let Some(path) = &self.path {
            jsonl::append(path, &record)?;
        }
        records.insert(key, record);
        Ok(true)
    }

    /// All records ordered by (agent id, judged case id).
    pub fn all(&self) -> Vec<T> {
        self.records.lock().expect("store lock").values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One provider exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub agent_id: String,
    pub judged_case_id: String,
    /// Candidate rank for precedent classification; absent for rule calls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_rank: Option<usize>,
    pub attempt: u32,
    /// The item prompt; system and demonstration turns are fixed per template.
    pub prompt: ChatMessage,
    pub reply: String,
    pub parsed: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub defaulted: bool,
}

/// Append-only transcript log.
pub struct TranscriptLog {
    path: Option<PathBuf>,
    lock: Mutex<()>,
}

impl TranscriptLog {
    pub fn discard() -> Self {
        TranscriptLog {
            path: None,
            lock: Mutex::new(()),
        }
    }

    pub fn at(path: &Path) -> Self {
        TranscriptLog {
            path: Some(path.to_path_buf()),
            lock: Mutex::new(()),
        }
    }

    pub fn append(&self, entries: &[TranscriptEntry]) -> Result<(), JsonlError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let _guard = self.lock.lock().expect("transcript lock");
        for e in entries {
            jsonl::append(path, e)?;
        }
        Ok(())
    }
}
