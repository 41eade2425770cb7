//! Per-session state machine, driven only by logged events so that replaying
//! a log reproduces the state exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Condition, ServiceError};
use crate::agents::RuleDecisionRecord;
use crate::decision::{Decision, Domain};
use crate::synthesis::{PrecedentSelection, SelectionVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Pending,
    VerdictsSubmitted,
    Finalized,
}

/// What an annotator submits before the final decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged, try_from = "SubmissionWire")]
pub enum Submission {
    Verdicts { verdicts: BTreeMap<usize, SelectionVerdict> },
    RuleChecks { rule_checks: Vec<usize> },
}

// Untagged enums buffer their input, which loses serde_json's support for
// integer map keys written as strings; go through an explicit wire shape.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmissionWire {
    verdicts: Option<BTreeMap<String, SelectionVerdict>>,
    rule_checks: Option<Vec<usize>>,
}

impl TryFrom<SubmissionWire> for Submission {
    type Error = String;

    fn try_from(w: SubmissionWire) -> Result<Self, Self::Error> {
        match (w.verdicts, w.rule_checks) {
            (Some(v), None) => v
                .into_iter()
                .map(|(rank, verdict)| {
                    rank.parse::<usize>()
                        .map(|r| (r, verdict))
                        .map_err(|_| format!("verdict key `{rank}` is not a rank"))
                })
                .collect::<Result<_, _>>()
                .map(|verdicts| Submission::Verdicts { verdicts }),
            (None, Some(rule_checks)) => Ok(Submission::RuleChecks { rule_checks }),
            _ => Err("expected exactly one of `verdicts` or `rule_checks`".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        annotator_id: String,
        group_id: String,
        domain: Domain,
        condition: Condition,
        batch_index: usize,
        case_ids: Vec<String>,
    },
    Selection {
        case_id: String,
        submission: Submission,
    },
    Decision {
        case_id: String,
        decision: Decision,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseProgress {
    pub case_id: String,
    pub status: CaseStatus,
    pub submission: Option<Submission>,
    pub decision: Option<Decision>,
    /// Number of selection submissions that changed the stored one.
    pub revisions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub annotator_id: String,
    pub group_id: String,
    pub domain: Domain,
    pub condition: Condition,
    pub batch_index: usize,
    pub cases: Vec<CaseProgress>,
}

/// Outcome of validating a submission against the current state.
#[derive(Debug, PartialEq)]
pub enum Transition {
    /// Exact resubmission of what is already stored.
    Unchanged,
    Apply(Event),
}

impl Session {
    pub fn from_created(event: &Event) -> Option<Session> {
        let Event::Created {
            session_id,
            annotator_id,
            group_id,
            domain,
            condition,
            batch_index,
            case_ids,
        } = event
        else {
            return None;
        };
        Some(Session {
            session_id: session_id.clone(),
            annotator_id: annotator_id.clone(),
            group_id: group_id.clone(),
            domain: *domain,
            condition: *condition,
            batch_index: *batch_index,
            cases: case_ids
                .iter()
                .map(|id| CaseProgress {
                    case_id: id.clone(),
                    status: CaseStatus::Pending,
                    submission: None,
                    decision: None,
                    revisions: 0,
                })
                .collect(),
        })
    }

    /// Index of the active case: the lowest-index case not yet finalized.
    pub fn current(&self) -> Option<usize> {
        self.cases.iter().position(|c| c.status != CaseStatus::Finalized)
    }

    pub fn is_done(&self) -> bool {
        self.current().is_none()
    }

    pub fn finalized(&self) -> usize {
        self.cases.iter().filter(|c| c.status == CaseStatus::Finalized).count()
    }

    fn position(&self, case_id: &str) -> Result<usize, ServiceError> {
        self.cases
            .iter()
            .position(|c| c.case_id == case_id)
            .ok_or_else(|| ServiceError::UnknownCase(case_id.to_string()))
    }

    /// Validates a selection. `candidate_ranks` is the set of ranks shown
    /// for a CASE task; `n_rules` bounds rule indices for a RULE task.
    pub fn check_selection(
        &self,
        case_id: &str,
        submission: &Submission,
        candidate_ranks: &[usize],
        n_rules: usize,
    ) -> Result<Transition, ServiceError> {
        let i = self.position(case_id)?;
        let case = &self.cases[i];
        if case.status == CaseStatus::Finalized {
            return if case.submission.as_ref() == Some(submission) {
                Ok(Transition::Unchanged)
            } else {
                Err(ServiceError::ConflictingResubmission(case_id.to_string()))
            };
        }
        if self.current() != Some(i) {
            return Err(ServiceError::OutOfOrder(format!(
                "`{case_id}` is not the active case"
            )));
        }
        match (self.condition, submission) {
            (Condition::Case, Submission::Verdicts { verdicts }) => {
                let given: Vec<usize> = verdicts.keys().copied().collect();
                if given != candidate_ranks {
                    return Err(ServiceError::IncompleteVerdicts {
                        expected: candidate_ranks.len(),
                        found: verdicts.keys().filter(|r| candidate_ranks.contains(r)).count(),
                    });
                }
            }
            (Condition::Rule, Submission::RuleChecks { rule_checks }) => {
                if let Some(bad) = rule_checks.iter().find(|&&r| r >= n_rules) {
                    return Err(ServiceError::BadRequest(format!("rule index {bad} out of range")));
                }
            }
            (Condition::Case, _) => {
                return Err(ServiceError::BadRequest("CASE sessions take `verdicts`".into()))
            }
            (Condition::Rule, _) => {
                return Err(ServiceError::BadRequest("RULE sessions take `rule_checks`".into()))
            }
        }
        if case.submission.as_ref() == Some(submission) {
            return Ok(Transition::Unchanged);
        }
        Ok(Transition::Apply(Event::Selection {
            case_id: case_id.to_string(),
            submission: submission.clone(),
        }))
    }

    pub fn check_decision(&self, case_id: &str, decision: Decision) -> Result<Transition, ServiceError> {
        let i = self.position(case_id)?;
        if !self.domain.admits(decision) {
            return Err(ServiceError::InvalidDecisionVariant {
                domain: self.domain,
                decision,
            });
        }
        let case = &self.cases[i];
        match case.status {
            CaseStatus::Finalized if case.decision == Some(decision) => Ok(Transition::Unchanged),
            CaseStatus::Finalized => Err(ServiceError::ConflictingResubmission(case_id.to_string())),
            CaseStatus::Pending => Err(ServiceError::OutOfOrder(format!(
                "selection for `{case_id}` not yet submitted"
            ))),
            CaseStatus::VerdictsSubmitted => Ok(Transition::Apply(Event::Decision {
                case_id: case_id.to_string(),
                decision,
            })),
        }
    }

    /// Applies a logged event. Events are assumed valid; replay of a log
    /// written by this module always is.
    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::Created { .. } => {}
            Event::Selection { case_id, submission } => {
                if let Some(c) = self.cases.iter_mut().find(|c| &c.case_id == case_id) {
                    if c.submission.is_some() {
                        c.revisions += 1;
                    }
                    c.submission = Some(submission.clone());
                    c.status = CaseStatus::VerdictsSubmitted;
                }
            }
            Event::Decision { case_id, decision } => {
                if let Some(c) = self.cases.iter_mut().find(|c| &c.case_id == case_id) {
                    c.decision = Some(*decision);
                    c.status = CaseStatus::Finalized;
                }
            }
        }
    }

    pub fn replay(events: &[Event]) -> Option<Session> {
        let mut session = Session::from_created(events.first()?)?;
        for e in &events[1..] {
            session.apply(e);
        }
        Some(session)
    }

    /// Finalized CASE cases as selections, in batch order.
    pub fn selections(&self) -> Vec<PrecedentSelection> {
        if self.condition != Condition::Case {
            return Vec::new();
        }
        self.cases
            .iter()
            .filter(|c| c.status == CaseStatus::Finalized)
            .filter_map(|c| match &c.submission {
                Some(Submission::Verdicts { verdicts }) => Some(PrecedentSelection {
                    judged_case_id: c.case_id.clone(),
                    agent_id: self.annotator_id.clone(),
                    verdicts: verdicts.clone(),
                    final_unconstrained: c.decision,
                }),
                _ => None,
            })
            .collect()
    }

    /// Finalized RULE cases as decision records, in batch order.
    pub fn rule_decisions(&self) -> Vec<RuleDecisionRecord> {
        if self.condition != Condition::Rule {
            return Vec::new();
        }
        self.cases
            .iter()
            .filter(|c| c.status == CaseStatus::Finalized)
            .filter_map(|c| match (&c.submission, c.decision) {
                (Some(Submission::RuleChecks { rule_checks }), Some(decision)) => Some(RuleDecisionRecord {
                    judged_case_id: c.case_id.clone(),
                    agent_id: self.annotator_id.clone(),
                    decision,
                    rule_checks: rule_checks.clone(),
                    rationale: None,
                }),
                _ => None,
            })
            .collect()
    }
}
