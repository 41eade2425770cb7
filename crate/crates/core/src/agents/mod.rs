//! Agents that ground decisions: case agents mark retrieved candidates as
//! precedents, rule agents decide directly from a group's written rules.

pub mod chat;
pub mod parse;
pub mod prompt;
mod store;

use std::collections::HashMap;
use std::thread;

use serde::{Deserialize, Serialize};

pub use chat::{ChatError, ChatMessage, ChatProvider, FakeChat, ScriptedChat, DEFAULT_CHAT_MODEL};
pub use parse::{parse_decision, parse_verdict, ParsedVerdict};
pub use prompt::{format_rules, PromptError, PromptTemplate};
pub use store::{AgentRecord, RecordStore, TranscriptEntry, TranscriptLog};

use crate::corpus::{Case, Corpus};
use crate::decision::{Decision, Domain};
use crate::embedding::RetryPolicy;
use crate::jsonl::JsonlError;
use crate::retrieval::{RetrievalResult, RetrievedCase};
use crate::synthesis::{PrecedentSelection, SelectionVerdict};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("no parseable decision for `{case_id}` after retry; last reply: {reply:?}")]
    Unparseable { case_id: String, reply: String },
    #[error("no retrieval result for `{0}`")]
    MissingRetrieval(String),
    #[error("unknown case `{0}`")]
    MissingCase(String),
    #[error("no rule set for group `{0}`")]
    MissingRuleSet(String),
    #[error("rule set for `{0}` is empty")]
    EmptyRuleSet(String),
    #[error(transparent)]
    Store(#[from] JsonlError),
}

/// A community's written rules, or a rater group's toxicity indicators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub domain: Domain,
    pub group_id: String,
    pub rules: Vec<String>,
}

/// A decision made directly from rules, by a human or an LLM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDecisionRecord {
    pub judged_case_id: String,
    pub agent_id: String,
    pub decision: Decision,
    /// 0-based indices of rules the annotator marked as applied.
    #[serde(default)]
    pub rule_checks: Vec<usize>,
    /// Model reasoning, verbatim, including any rules it cited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// A retrieved candidate together with its text.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub retrieved: &'a RetrievedCase,
    pub text: &'a str,
}

pub struct AgentOutput<T> {
    pub record: T,
    pub transcript: Vec<TranscriptEntry>,
}

impl<T> AgentOutput<T> {
    fn silent(record: T) -> Self {
        AgentOutput {
            record,
            transcript: Vec::new(),
        }
    }
}

pub trait CaseAgent: Sync {
    fn agent_id(&self) -> &str;
    fn select(
        &self,
        judged: &Case,
        candidates: &[Candidate<'_>],
    ) -> Result<AgentOutput<PrecedentSelection>, AgentError>;
}

pub trait RuleAgent: Sync {
    fn agent_id(&self) -> &str;
    fn decide(
        &self,
        judged: &Case,
        rules: &RuleSet,
    ) -> Result<AgentOutput<RuleDecisionRecord>, AgentError>;
}

fn selection_from(
    agent_id: &str,
    judged: &Case,
    candidates: &[Candidate<'_>],
    verdict: impl Fn(&Candidate<'_>) -> SelectionVerdict,
) -> PrecedentSelection {
    PrecedentSelection {
        judged_case_id: judged.id.clone(),
        agent_id: agent_id.to_string(),
        verdicts: candidates.iter().map(|c| (c.retrieved.rank, verdict(c))).collect(),
        final_unconstrained: None,
    }
}

/// Marks every candidate as a precedent.
pub struct AllPrecedentAgent {
    pub agent_id: String,
}

impl CaseAgent for AllPrecedentAgent {
    fn agent_id(&self) -> &str {
        &self.agent_id
    }
    fn select(
        &self,
        judged: &Case,
        candidates: &[Candidate<'_>],
    ) -> Result<AgentOutput<PrecedentSelection>, AgentError> {
        Ok(AgentOutput::silent(selection_from(
            &self.agent_id,
            judged,
            candidates,
            |_| SelectionVerdict::Precedent,
        )))
    }
}

/// Marks a candidate as a precedent exactly when its gold equals the judged
/// case's gold. Reads the judged gold, so it is a reference, not a strategy.
pub struct GoldMatchAgent {
    pub agent_id: String,
}

impl CaseAgent for GoldMatchAgent {
    fn agent_id(&self) -> &str {
        &self.agent_id
    }
    fn select(
        &self,
        judged: &Case,
        candidates: &[Candidate<'_>],
    ) -> Result<AgentOutput<PrecedentSelection>, AgentError> {
        Ok(AgentOutput::silent(selection_from(
            &self.agent_id,
            judged,
            candidates,
            |c| {
                if c.retrieved.gold == judged.gold {
                    SelectionVerdict::Precedent
                } else {
                    SelectionVerdict::DoesNotApply
                }
            },
        )))
    }
}

/// Parsed reply to a precedent-classification prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmVerdict {
    pub raw_text: String,
    pub parsed: ParsedVerdict,
}

/// Asks the model whether one candidate applies. An unparseable reply is
/// retried once; a second unparseable reply becomes `DoesNotApply` with the
/// transcript entry flagged as defaulted.
pub fn llm_classify_precedent(
    chat: &dyn ChatProvider,
    retry: &RetryPolicy,
    agent_id: &str,
    judged: &Case,
    candidate: &Candidate<'_>,
    template: &PromptTemplate,
) -> Result<(SelectionVerdict, LlmVerdict, Vec<TranscriptEntry>), AgentError> {
    let decision = candidate.retrieved.gold.to_string();
    let messages = template.messages(&[
        ("input", &judged.text),
        ("precedent", candidate.text),
        ("decision", &decision),
    ])?;
    let mut transcript = Vec::new();
    for attempt in 1..=2 {
        let reply = retry.run(ChatError::is_transient, || chat.complete(&messages))?;
        let parsed = parse_verdict(&reply);
        let verdict = match parsed {
            ParsedVerdict::Precedent => Some(SelectionVerdict::Precedent),
            ParsedVerdict::DoesNotApply => Some(SelectionVerdict::DoesNotApply),
            ParsedVerdict::Unparseable => None,
        };
        let defaulted = verdict.is_none() && attempt == 2;
        transcript.push(TranscriptEntry {
            agent_id: agent_id.to_string(),
            judged_case_id: judged.id.clone(),
            candidate_rank: Some(candidate.retrieved.rank),
            attempt,
            prompt: messages.last().expect("item prompt").clone(),
            reply: reply.clone(),
            parsed: serde_json::to_value(parsed)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            defaulted,
        });
        let llm = LlmVerdict {
            raw_text: reply,
            parsed,
        };
        if let Some(v) = verdict {
            return Ok((v, llm, transcript));
        }
        if defaulted {
            tracing::warn!(case = %judged.id, rank = candidate.retrieved.rank, "unparseable verdict, defaulting to does_not_apply");
            return Ok((SelectionVerdict::DoesNotApply, llm, transcript));
        }
    }
    unreachable!("loop returns on the second attempt")
}

/// Asks the model for a final decision from the rules. An unparseable reply
/// is retried once, then surfaced as an error.
pub fn llm_rule_decide(
    chat: &dyn ChatProvider,
    retry: &RetryPolicy,
    agent_id: &str,
    judged: &Case,
    rules: &RuleSet,
    template: &PromptTemplate,
) -> Result<(Decision, String, Vec<TranscriptEntry>), AgentError> {
    let instructions = format_rules(&rules.rules);
    let messages = template.messages(&[("instructions", &instructions), ("input", &judged.text)])?;
    let mut transcript = Vec::new();
    let mut last_reply = String::new();
    for attempt in 1..=2 {
        let reply = retry.run(ChatError::is_transient, || chat.complete(&messages))?;
        let parsed = parse_decision(&reply, rules.domain);
        transcript.push(TranscriptEntry {
            agent_id: agent_id.to_string(),
            judged_case_id: judged.id.clone(),
            candidate_rank: None,
            attempt,
            prompt: messages.last().expect("item prompt").clone(),
            reply: reply.clone(),
            parsed: parsed.map(|d| d.to_string()).unwrap_or_else(|| "unparseable".into()),
            defaulted: false,
        });
        if let Some(d) = parsed {
            return Ok((d, reply, transcript));
        }
        last_reply = reply;
    }
    Err(AgentError::Unparseable {
        case_id: judged.id.clone(),
        reply: last_reply,
    })
}

/// LLM precedent classifier: one chat call per candidate.
pub struct LlmCaseAgent<P> {
    pub agent_id: String,
    pub chat: P,
    pub template: PromptTemplate,
    pub retry: RetryPolicy,
}

impl<P: ChatProvider> LlmCaseAgent<P> {
    pub fn new(chat: P, domain: Domain) -> Self {
        LlmCaseAgent {
            agent_id: format!("llm-{}", chat.model_id()),
            chat,
            template: PromptTemplate::case_selection(domain),
            retry: RetryPolicy::default(),
        }
    }
}

impl<P: ChatProvider> CaseAgent for LlmCaseAgent<P> {
    fn agent_id(&self) -> &str {
        &self.agent_id
    }

    fn select(
        &self,
        judged: &Case,
        candidates: &[Candidate<'_>],
    ) -> Result<AgentOutput<PrecedentSelection>, AgentError> {
        let mut verdicts = std::collections::BTreeMap::new();
        let mut transcript = Vec::new();
        for c in candidates {
            let (v, _, t) =
                llm_classify_precedent(&self.chat, &self.retry, &self.agent_id, judged, c, &self.template)?;
            verdicts.insert(c.retrieved.rank, v);
            transcript.extend(t);
        }
        Ok(AgentOutput {
            record: PrecedentSelection {
                judged_case_id: judged.id.clone(),
                agent_id: self.agent_id.clone(),
                verdicts,
                final_unconstrained: None,
            },
            transcript,
        })
    }
}

/// LLM rule-grounded decider.
pub struct LlmRuleAgent<P> {
    pub agent_id: String,
    pub chat: P,
    pub template: PromptTemplate,
    pub retry: RetryPolicy,
}

impl<P: ChatProvider> LlmRuleAgent<P> {
    pub fn new(chat: P, domain: Domain) -> Self {
        LlmRuleAgent {
            agent_id: format!("llm-{}", chat.model_id()),
            chat,
            template: PromptTemplate::rule(domain),
            retry: RetryPolicy::default(),
        }
    }
}

impl<P: ChatProvider> RuleAgent for LlmRuleAgent<P> {
    fn agent_id(&self) -> &str {
        &self.agent_id
    }

    fn decide(
        &self,
        judged: &Case,
        rules: &RuleSet,
    ) -> Result<AgentOutput<RuleDecisionRecord>, AgentError> {
        if rules.rules.is_empty() {
            return Err(AgentError::EmptyRuleSet(rules.group_id.clone()));
        }
        let (decision, reply, transcript) =
            llm_rule_decide(&self.chat, &self.retry, &self.agent_id, judged, rules, &self.template)?;
        Ok(AgentOutput {
            record: RuleDecisionRecord {
                judged_case_id: judged.id.clone(),
                agent_id: self.agent_id.clone(),
                decision,
                rule_checks: Vec::new(),
                rationale: Some(reply),
            },
            transcript,
        })
    }
}

/// Runs `work` over `items` in waves of `concurrency` threads, persisting each
/// success via `persist` in input order. On failure, everything that
/// succeeded is still persisted and the first error is returned.
fn run_waves<I: Sync, T: Send>(
    items: &[I],
    concurrency: usize,
    work: impl Fn(&I) -> Result<T, AgentError> + Sync,
    mut persist: impl FnMut(T) -> Result<(), AgentError>,
) -> Result<(), AgentError> {
    for wave in items.chunks(concurrency.max(1)) {
        let outcomes: Vec<Result<T, AgentError>> = if wave.len() == 1 {
            vec![work(&wave[0])]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|item| s.spawn(|| work(item))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("agent worker panicked"))
                    .collect()
            })
        };
        let mut first_err = None;
        for outcome in outcomes {
            match outcome {
                Ok(v) => persist(v)?,
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_err {
            return Err(e);
        }
    }
    Ok(())
}

/// Collects a precedent selection for every judged case, skipping cases
/// already in `store`. Returns selections in `judged` order.
pub fn run_case_agent(
    agent: &dyn CaseAgent,
    judged: &[&Case],
    results: &HashMap<String, RetrievalResult>,
    precedents: &Corpus,
    store: &RecordStore<PrecedentSelection>,
    transcripts: &TranscriptLog,
    concurrency: usize,
) -> Result<Vec<PrecedentSelection>, AgentError> {
    let pending: Vec<&Case> = judged
        .iter()
        .copied()
        .filter(|c| !store.contains(agent.agent_id(), &c.id))
        .collect();
    run_waves(
        &pending,
        concurrency,
        |case| {
            let result = results
                .get(&case.id)
                .ok_or_else(|| AgentError::MissingRetrieval(case.id.clone()))?;
            let candidates = result
                .items
                .iter()
                .map(|item| {
                    precedents
                        .get(&item.case_id)
                        .map(|p| Candidate {
                            retrieved: item,
                            text: &p.text,
                        })
                        .ok_or_else(|| AgentError::MissingCase(item.case_id.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            agent.select(case, &candidates)
        },
        |out| {
            transcripts.append(&out.transcript)?;
            store.insert(out.record)?;
            Ok(())
        },
    )?;
    Ok(judged
        .iter()
        .filter_map(|c| store.get(agent.agent_id(), &c.id))
        .collect())
}

/// Rule-condition counterpart of [`run_case_agent`].
pub fn run_rule_agent(
    agent: &dyn RuleAgent,
    judged: &[&Case],
    rule_sets: &HashMap<String, RuleSet>,
    store: &RecordStore<RuleDecisionRecord>,
    transcripts: &TranscriptLog,
    concurrency: usize,
) -> Result<Vec<RuleDecisionRecord>, AgentError> {
    let pending: Vec<&Case> = judged
        .iter()
        .copied()
        .filter(|c| !store.contains(agent.agent_id(), &c.id))
        .collect();
    run_waves(
        &pending,
        concurrency,
        |case| {
            let rules = rule_sets
                .get(&case.group_id)
                .ok_or_else(|| AgentError::MissingRuleSet(case.group_id.clone()))?;
            agent.decide(case, rules)
        },
        |out| {
            transcripts.append(&out.transcript)?;
            store.insert(out.record)?;
            Ok(())
        },
    )?;
    Ok(judged
        .iter()
        .filter_map(|c| store.get(agent.agent_id(), &c.id))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn case(id: &str, text: &str, gold: Decision) -> Case {
        Case {
            id: id.into(),
            text: text.into(),
            group_id: "r/Games".into(),
            gold,
            raw_ratings: None,
        }
    }

    fn retrieved(rank: usize, gold: Decision) -> RetrievedCase {
        RetrievedCase {
            case_id: format!("p{rank}"),
            similarity: 1.0 - rank as f64 / 10.0,
            rank,
            gold,
        }
    }

    fn replying(text: &'static str) -> impl ChatProvider {
        ScriptedChat::new(move |_| Ok(text.to_string()))
    }

    fn classify_with(reply: &'static str) -> (SelectionVerdict, Vec<TranscriptEntry>) {
        let judged = case("q", "new comment", Decision::KEEP);
        let r = retrieved(1, Decision::REMOVE);
        let c = Candidate {
            retrieved: &r,
            text: "old comment",
        };
        let (v, _, t) = llm_classify_precedent(
            &replying(reply),
            &RetryPolicy::none(),
            "a",
            &judged,
            &c,
            &PromptTemplate::case_selection(Domain::Mod),
        )
        .unwrap();
        (v, t)
    }

    #[test]
    fn classify_examples() {
        let (v, t) = classify_with("relevant");
        assert_eq!(v, SelectionVerdict::Precedent);
        assert_eq!(t.len(), 1);
        assert!(t[0].prompt.content.contains("old comment"));
        assert!(t[0].prompt.content.contains("\"remove\""));

        assert_eq!(classify_with("Not relevant.").0, SelectionVerdict::DoesNotApply);

        let (v, t) = classify_with("it depends…");
        assert_eq!(v, SelectionVerdict::DoesNotApply);
        assert_eq!(t.len(), 2);
        assert!(!t[0].defaulted && t[1].defaulted);
    }

    #[test]
    fn rule_decide_examples() {
        let judged = case("q", "text", Decision::KEEP);
        let mod_rules = RuleSet {
            domain: Domain::Mod,
            group_id: "r/Games".into(),
            rules: vec!["Be civil.".into()],
        };
        let tox_rules = RuleSet {
            domain: Domain::Toxicity,
            ..mod_rules.clone()
        };
        let retry = RetryPolicy::none();
        let t = PromptTemplate::rule(Domain::Mod);
        let (d, _, _) =
            llm_rule_decide(&replying("...final decision: remove"), &retry, "a", &judged, &mod_rules, &t).unwrap();
        assert_eq!(d, Decision::REMOVE);
        let t = PromptTemplate::rule(Domain::Toxicity);
        let (d, _, _) = llm_rule_decide(&replying("4"), &retry, "a", &judged, &tox_rules, &t).unwrap();
        assert_eq!(d, Decision::Ordinal(4));

        let calls = AtomicUsize::new(0);
        let six = ScriptedChat::new(|_| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("six".to_string())
        });
        let err = llm_rule_decide(&six, &retry, "a", &judged, &tox_rules, &t).unwrap_err();
        assert!(matches!(err, AgentError::Unparseable { .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn rule_prompt_lists_rules() {
        let judged = case("q", "the judged text", Decision::KEEP);
        let rules = RuleSet {
            domain: Domain::Mod,
            group_id: "r/Games".into(),
            rules: vec!["Be civil.".into(), "No spoilers.".into()],
        };
        let seen = std::sync::Mutex::new(String::new());
        let chat = ScriptedChat::new(|m: &[ChatMessage]| {
            *seen.lock().unwrap() = m.last().unwrap().content.clone();
            Ok("keep".into())
        });
        let t = PromptTemplate::rule(Domain::Mod);
        llm_rule_decide(&chat, &RetryPolicy::none(), "a", &judged, &rules, &t).unwrap();
        let prompt = seen.lock().unwrap().clone();
        assert!(prompt.contains("1. Be civil.\n2. No spoilers."));
        assert!(prompt.contains("the judged text"));
    }
}
