//! Annotation backend: serves CASE and RULE tasks to human annotators,
//! records verdicts and final decisions, and exports them in the same
//! schema the agents produce.
//!
//! Every session is an append-only JSONL event log under the log directory.
//! Opening the service replays all logs, so a restart loses at most the
//! request that was in flight.

mod http;
mod session;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

pub use http::{router, serve};
pub use session::{CaseProgress, CaseStatus, Event, Session, Submission, Transition};

use crate::agents::{RuleDecisionRecord, RuleSet};
use crate::corpus::{Corpus, GroupSplits};
use crate::decision::{Decision, Domain};
use crate::jsonl::{self, JsonlError};
use crate::retrieval::RetrievalResult;
use crate::synthesis::{synthesize, PrecedentSelection, SynthesizedDecision};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("every batch for `{group_id}` / {condition} already has its annotators")]
    QuotaFilled { group_id: String, condition: Condition },
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("case `{0}` is not in this session")]
    UnknownCase(String),
    #[error("session `{0}` is complete")]
    SessionClosed(String),
    #[error("expected a verdict for each of {expected} candidates, got {found}")]
    IncompleteVerdicts { expected: usize, found: usize },
    #[error("out of order: {0}")]
    OutOfOrder(String),
    #[error("case `{0}` is finalized with a different submission")]
    ConflictingResubmission(String),
    #[error("{decision} is not a {domain} decision")]
    InvalidDecisionVariant { domain: Domain, decision: Decision },
    #[error("condition {0} is not offered")]
    ConditionUnavailable(Condition),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("inconsistent service data: {0}")]
    Data(String),
    #[error(transparent)]
    Log(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Condition {
    Case,
    Rule,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Case => "CASE",
            Condition::Rule => "RULE",
        })
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CASE" => Ok(Condition::Case),
            "RULE" => Ok(Condition::Rule),
            _ => Err(format!("unknown condition `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Annotators per (group, batch, condition).
    pub quota: usize,
    /// Candidates shown per CASE task.
    pub k_max: usize,
    pub conditions: Vec<Condition>,
    pub port: u16,
    pub log_dir: PathBuf,
    /// Directory served at `/` (the annotation UI bundle).
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            quota: 3,
            k_max: 15,
            conditions: vec![Condition::Case, Condition::Rule],
            port: 8080,
            log_dir: PathBuf::from("sessions"),
            static_dir: None,
        }
    }
}

/// Read-only inputs: the corpus, its splits, retrieval for evaluation cases,
/// and the rule sets.
#[derive(Debug, Clone)]
pub struct ServiceData {
    pub corpus: Corpus,
    pub splits: GroupSplits,
    pub retrieval: HashMap<String, RetrievalResult>,
    pub rule_sets: HashMap<String, RuleSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub rank: usize,
    pub text: String,
    /// The precedent's recorded decision, verbatim.
    pub decision: Decision,
}

/// One task. Similarity scores stay server-side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub session_id: String,
    pub case_id: String,
    /// 1-based position in the batch.
    pub position: usize,
    pub total: usize,
    pub condition: Condition,
    pub domain: Domain,
    pub text: String,
    pub instructions: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<String>,
    pub status: CaseStatus,
    /// What was already submitted for this case, so a refresh restores it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted: Option<Submission>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextTask {
    Task(TaskPayload),
    Done { session_id: String, finalized: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub annotator_id: String,
    pub group_id: String,
    pub condition: Condition,
    pub batch_index: usize,
    pub cases: Vec<CaseProgress>,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        SessionView {
            session_id: s.session_id.clone(),
            annotator_id: s.annotator_id.clone(),
            group_id: s.group_id.clone(),
            condition: s.condition,
            batch_index: s.batch_index,
            cases: s.cases.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub session_id: String,
    pub case_id: String,
    pub status: CaseStatus,
    pub revisions: u32,
    /// Binding decision synthesized from the verdicts; only present once the
    /// case is finalized, so it cannot anchor the annotator's own decision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_decision: Option<SynthesizedDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResults {
    pub session_id: String,
    pub condition: Condition,
    /// True while some cases are not finalized; only finalized ones are exported.
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selections: Vec<PrecedentSelection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rule_decisions: Vec<RuleDecisionRecord>,
}

fn instructions(domain: Domain, condition: Condition) -> String {
    let decide = match domain {
        Domain::Mod => "Then decide whether the comment should be kept or removed.",
        Domain::Toxicity => {
            "Then rate how toxic the comment is, from 1 (not at all toxic) to 5 (extremely toxic)."
        }
    };
    let select = match condition {
        Condition::Case => {
            "For each past case on the right, choose Precedent if its decision should carry over to \
             the case on the left, or Doesn't Apply if it should not."
        }
        Condition::Rule => "Check every rule on the right that applies to the case on the left.",
    };
    format!("{select} {decide}")
}

struct Slot {
    session: Mutex<Session>,
    path: Option<PathBuf>,
}

/// The annotation backend. Sessions lock individually; creation takes a
/// global lock so quota accounting stays exact.
pub struct AnnotationService {
    config: ServiceConfig,
    data: ServiceData,
    persist: bool,
    sessions: RwLock<BTreeMap<String, Arc<Slot>>>,
    create_lock: Mutex<()>,
}

impl AnnotationService {
    /// Opens the service over `config.log_dir`, replaying existing logs.
    pub fn open(config: ServiceConfig, data: ServiceData) -> Result<Self, ServiceError> {
        Self::build(config, data, true)
    }

    /// A service that keeps sessions in memory only.
    pub fn in_memory(config: ServiceConfig, data: ServiceData) -> Result<Self, ServiceError> {
        Self::build(config, data, false)
    }

    fn build(config: ServiceConfig, data: ServiceData, persist: bool) -> Result<Self, ServiceError> {
        if config.quota == 0 || config.k_max == 0 {
            return Err(ServiceError::Data("quota and k_max must be positive".into()));
        }
        for split in data.splits.values() {
            for id in &split.evaluation_portion {
                if data.corpus.get(id).is_none() {
                    return Err(ServiceError::Data(format!("split case `{id}` not in corpus")));
                }
            }
        }
        let mut sessions = BTreeMap::new();
        if persist {
            for (id, session) in replay_dir(&config.log_dir)? {
                let path = config.log_dir.join(format!("{id}.jsonl"));
                sessions.insert(
                    id,
                    Arc::new(Slot {
                        session: Mutex::new(session),
                        path: Some(path),
                    }),
                );
            }
        }
        Ok(AnnotationService {
            config,
            data,
            persist,
            sessions: RwLock::new(sessions),
            create_lock: Mutex::new(()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn slot(&self, session_id: &str) -> Result<Arc<Slot>, ServiceError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))
    }

    fn log(&self, slot: &Slot, event: &Event) -> Result<(), ServiceError> {
        if let Some(path) = &slot.path {
            jsonl::append(path, event)?;
        }
        Ok(())
    }

    /// Assigns the lowest-index batch of `group_id` that still has room for
    /// `condition` and that this annotator has not already taken.
    pub fn create_session(
        &self,
        annotator_id: &str,
        group_id: &str,
        condition: Condition,
    ) -> Result<SessionView, ServiceError> {
        if annotator_id.trim().is_empty() {
            return Err(ServiceError::BadRequest("annotator id is empty".into()));
        }
        let split = self
            .data
            .splits
            .get(group_id)
            .ok_or_else(|| ServiceError::UnknownGroup(group_id.to_string()))?;
        if !self.config.conditions.contains(&condition) {
            return Err(ServiceError::ConditionUnavailable(condition));
        }
        if condition == Condition::Rule && !self.data.rule_sets.contains_key(group_id) {
            return Err(ServiceError::Data(format!("no rules for `{group_id}`")));
        }

        let _guard = self.create_lock.lock().expect("create lock");
        let mut taken: HashMap<usize, usize> = HashMap::new();
        let mut mine = Vec::new();
        let n_sessions;
        {
            let sessions = self.sessions.read().expect("sessions lock");
            n_sessions = sessions.len();
            for slot in sessions.values() {
                let s = slot.session.lock().expect("session lock");
                if s.group_id == group_id && s.condition == condition {
                    *taken.entry(s.batch_index).or_default() += 1;
                    if s.annotator_id == annotator_id {
                        mine.push(s.batch_index);
                    }
                }
            }
        }
        let batch = split
            .batches
            .iter()
            .find(|b| taken.get(&b.index).copied().unwrap_or(0) < self.config.quota && !mine.contains(&b.index))
            .ok_or_else(|| ServiceError::QuotaFilled {
                group_id: group_id.to_string(),
                condition,
            })?;

        let session_id = format!("s{:06}", n_sessions + 1);
        let created = Event::Created {
            session_id: session_id.clone(),
            annotator_id: annotator_id.to_string(),
            group_id: group_id.to_string(),
            domain: self.data.corpus.domain(),
            condition,
            batch_index: batch.index,
            case_ids: batch.case_ids.clone(),
        };
        let session = Session::from_created(&created).expect("created event");
        let path = self
            .persist
            .then(|| self.config.log_dir.join(format!("{session_id}.jsonl")));
        let slot = Slot {
            session: Mutex::new(session),
            path,
        };
        if let Some(dir) = slot.path.as_ref().and_then(|p| p.parent()) {
            std::fs::create_dir_all(dir).map_err(|source| JsonlError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        self.log(&slot, &created)?;
        let view = SessionView::from(&*slot.session.lock().expect("session lock"));
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(session_id, Arc::new(slot));
        Ok(view)
    }

    pub fn session(&self, session_id: &str) -> Result<SessionView, ServiceError> {
        let slot = self.slot(session_id)?;
        let s = slot.session.lock().expect("session lock");
        Ok(SessionView::from(&*s))
    }

    fn window(&self, case_id: &str) -> Result<RetrievalResult, ServiceError> {
        let full = self
            .data
            .retrieval
            .get(case_id)
            .ok_or_else(|| ServiceError::Data(format!("no retrieval for `{case_id}`")))?;
        full.truncate(self.config.k_max.min(full.k))
            .map_err(|e| ServiceError::Data(e.to_string()))
    }

    fn payload(&self, s: &Session, i: usize) -> Result<TaskPayload, ServiceError> {
        let progress = &s.cases[i];
        let case = self
            .data
            .corpus
            .get(&progress.case_id)
            .ok_or_else(|| ServiceError::Data(format!("unknown case `{}`", progress.case_id)))?;
        let mut candidates = Vec::new();
        let mut rules = Vec::new();
        match s.condition {
            Condition::Case => {
                for item in self.window(&case.id)?.items {
                    let p = self
                        .data
                        .corpus
                        .get(&item.case_id)
                        .ok_or_else(|| ServiceError::Data(format!("unknown precedent `{}`", item.case_id)))?;
                    candidates.push(CandidateView {
                        rank: item.rank,
                        text: p.text.clone(),
                        decision: item.gold,
                    });
                }
            }
            Condition::Rule => {
                rules = self
                    .data
                    .rule_sets
                    .get(&s.group_id)
                    .map(|r| r.rules.clone())
                    .unwrap_or_default();
            }
        }
        Ok(TaskPayload {
            session_id: s.session_id.clone(),
            case_id: case.id.clone(),
            position: i + 1,
            total: s.cases.len(),
            condition: s.condition,
            domain: s.domain,
            text: case.text.clone(),
            instructions: instructions(s.domain, s.condition),
            candidates,
            rules,
            status: progress.status,
            submitted: progress.submission.clone(),
        })
    }

    pub fn next_task(&self, session_id: &str) -> Result<NextTask, ServiceError> {
        let slot = self.slot(session_id)?;
        let s = slot.session.lock().expect("session lock");
        match s.current() {
            Some(i) => Ok(NextTask::Task(self.payload(&s, i)?)),
            None => Ok(NextTask::Done {
                session_id: s.session_id.clone(),
                finalized: s.finalized(),
            }),
        }
    }

    fn ack(&self, s: &Session, case_id: &str) -> Result<Ack, ServiceError> {
        let c = s
            .cases
            .iter()
            .find(|c| c.case_id == case_id)
            .ok_or_else(|| ServiceError::UnknownCase(case_id.to_string()))?;
        let derived_decision = match (s.condition, c.status, &c.submission) {
            (Condition::Case, CaseStatus::Finalized, Some(Submission::Verdicts { verdicts })) => {
                let selection = PrecedentSelection {
                    judged_case_id: case_id.to_string(),
                    agent_id: s.annotator_id.clone(),
                    verdicts: verdicts.clone(),
                    final_unconstrained: c.decision,
                };
                let window = self.window(case_id)?;
                Some(synthesize(&selection, &window).map_err(|e| ServiceError::Data(e.to_string()))?)
            }
            _ => None,
        };
        Ok(Ack {
            session_id: s.session_id.clone(),
            case_id: case_id.to_string(),
            status: c.status,
            revisions: c.revisions,
            derived_decision,
        })
    }

    fn commit(&self, slot: &Slot, s: &mut Session, transition: Transition) -> Result<(), ServiceError> {
        if let Transition::Apply(event) = transition {
            self.log(slot, &event)?;
            s.apply(&event);
        }
        Ok(())
    }

    /// Records verdicts (CASE) or rule checks (RULE) for the active case.
    /// Revisions are accepted until the final decision; an identical
    /// resubmission is a no-op with the same acknowledgement.
    pub fn submit_selection(
        &self,
        session_id: &str,
        case_id: &str,
        submission: &Submission,
    ) -> Result<Ack, ServiceError> {
        let slot = self.slot(session_id)?;
        let mut s = slot.session.lock().expect("session lock");
        let (ranks, n_rules) = match s.condition {
            Condition::Case => {
                let ranks = if s.cases.iter().any(|c| c.case_id == case_id) {
                    self.window(case_id)?.items.iter().map(|i| i.rank).collect()
                } else {
                    Vec::new()
                };
                (ranks, 0)
            }
            Condition::Rule => (
                Vec::new(),
                self.data.rule_sets.get(&s.group_id).map_or(0, |r| r.rules.len()),
            ),
        };
        let transition = s.check_selection(case_id, submission, &ranks, n_rules);
        let transition = match transition {
            Err(ServiceError::OutOfOrder(_)) if s.is_done() => {
                return Err(ServiceError::SessionClosed(session_id.to_string()))
            }
            other => other?,
        };
        self.commit(&slot, &mut s, transition)?;
        self.ack(&s, case_id)
    }

    /// Finalizes the active case with the annotator's own decision.
    pub fn submit_final_decision(
        &self,
        session_id: &str,
        case_id: &str,
        decision: Decision,
    ) -> Result<Ack, ServiceError> {
        let slot = self.slot(session_id)?;
        let mut s = slot.session.lock().expect("session lock");
        let transition = s.check_decision(case_id, decision)?;
        self.commit(&slot, &mut s, transition)?;
        self.ack(&s, case_id)
    }

    pub fn results(&self, session_id: &str) -> Result<SessionResults, ServiceError> {
        let slot = self.slot(session_id)?;
        let s = slot.session.lock().expect("session lock");
        Ok(results_of(&s))
    }

    /// Finalized records across all sessions, ordered by session id.
    pub fn export(&self) -> (Vec<PrecedentSelection>, Vec<RuleDecisionRecord>) {
        let sessions = self.sessions.read().expect("sessions lock");
        let mut selections = Vec::new();
        let mut rules = Vec::new();
        for slot in sessions.values() {
            let s = slot.session.lock().expect("session lock");
            selections.extend(s.selections());
            rules.extend(s.rule_decisions());
        }
        (selections, rules)
    }
}

fn results_of(s: &Session) -> SessionResults {
    SessionResults {
        session_id: s.session_id.clone(),
        condition: s.condition,
        partial: !s.is_done(),
        selections: s.selections(),
        rule_decisions: s.rule_decisions(),
    }
}

/// Replays every `*.jsonl` session log in `dir`, keyed by session id. A
/// missing directory holds no sessions.
pub fn replay_dir(dir: &Path) -> Result<BTreeMap<String, Session>, ServiceError> {
    let mut out = BTreeMap::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(source) => {
            return Err(JsonlError::Io {
                path: dir.display().to_string(),
                source,
            }
            .into())
        }
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    for path in paths {
        let events: Vec<Event> = jsonl::read_log(&path)?;
        let session = Session::replay(&events)
            .ok_or_else(|| ServiceError::Data(format!("{} does not start with a creation event", path.display())))?;
        out.insert(session.session_id.clone(), session);
    }
    Ok(out)
}

/// Finalized human records from a session log directory, for evaluation.
pub fn export_dir(dir: &Path) -> Result<(Vec<PrecedentSelection>, Vec<RuleDecisionRecord>), ServiceError> {
    let mut selections = Vec::new();
    let mut rules = Vec::new();
    for s in replay_dir(dir)?.values() {
        selections.extend(s.selections());
        rules.extend(s.rule_decisions());
    }
    Ok((selections, rules))
}
