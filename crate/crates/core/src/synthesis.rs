//! Decision synthesis from selected precedents.
//!
//! The synthesized value is the mode of the golds of the selected
//! precedents. When several values share the top count, the value whose
//! nearest supporting case (highest similarity, then lowest case id) is
//! closest wins. With no precedents selected, the same rule runs over every
//! retrieved case.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::decision::Decision;
use crate::retrieval::{rank_order, RetrievalResult, RetrievedCase};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthesisError {
    #[error("no verdict for retrieved rank {0}")]
    MissingVerdict(usize),
    #[error("verdict for rank {0}, which was not retrieved")]
    UnexpectedVerdict(usize),
    #[error("retrieval result is empty")]
    EmptyRetrieval,
    #[error("selection is for `{selection}` but retrieval is for `{result}`")]
    JudgedCaseMismatch { selection: String, result: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionVerdict {
    Precedent,
    DoesNotApply,
}

/// One agent's verdicts over the retrieved candidates of one judged case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecedentSelection {
    pub judged_case_id: String,
    pub agent_id: String,
    /// Keyed by 1-based retrieval rank.
    pub verdicts: BTreeMap<usize, SelectionVerdict>,
    /// The agent's own decision after seeing the candidates, not bound by
    /// the selected precedents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_unconstrained: Option<Decision>,
}

impl PrecedentSelection {
    pub fn uniform(
        judged_case_id: &str,
        agent_id: &str,
        result: &RetrievalResult,
        verdict: SelectionVerdict,
    ) -> Self {
        PrecedentSelection {
            judged_case_id: judged_case_id.to_string(),
            agent_id: agent_id.to_string(),
            verdicts: result.items.iter().map(|i| (i.rank, verdict)).collect(),
            final_unconstrained: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedDecision {
    pub value: Decision,
    /// Case ids the decision was drawn from, in rank order.
    pub supporting: Vec<String>,
    pub tie_broken: bool,
    pub fallback_used: bool,
}

/// Mode of golds with the nearest-case tie-break. `items` must be non-empty.
fn consensus(items: &[&RetrievedCase]) -> (Decision, bool) {
    let mut tally: HashMap<Decision, (usize, &RetrievedCase)> = HashMap::new();
    for item in items {
        tally
            .entry(item.gold)
            .and_modify(|(count, nearest)| {
                *count += 1;
                if rank_order((item.similarity, &item.case_id), (nearest.similarity, &nearest.case_id))
                    .is_lt()
                {
                    *nearest = item;
                }
            })
            .or_insert((1, item));
    }
    let top = tally.values().map(|(c, _)| *c).max().expect("non-empty items");
    let mut tied: Vec<(Decision, &RetrievedCase)> = tally
        .into_iter()
        .filter(|(_, (c, _))| *c == top)
        .map(|(d, (_, nearest))| (d, nearest))
        .collect();
    let tie_broken = tied.len() > 1;
    tied.sort_by(|a, b| rank_order((a.1.similarity, &a.1.case_id), (b.1.similarity, &b.1.case_id)));
    (tied[0].0, tie_broken)
}

fn from_support(support: &[&RetrievedCase], fallback_used: bool) -> SynthesizedDecision {
    let (value, tie_broken) = consensus(support);
    SynthesizedDecision {
        value,
        supporting: support.iter().map(|i| i.case_id.clone()).collect(),
        tie_broken,
        fallback_used,
    }
}

/// Derives the binding decision from an agent's verdicts.
pub fn synthesize(
    selection: &PrecedentSelection,
    result: &RetrievalResult,
) -> Result<SynthesizedDecision, SynthesisError> {
    if selection.judged_case_id != result.judged_case_id {
        return Err(SynthesisError::JudgedCaseMismatch {
            selection: selection.judged_case_id.clone(),
            result: result.judged_case_id.clone(),
        });
    }
    if result.items.is_empty() {
        return Err(SynthesisError::EmptyRetrieval);
    }
    if let Some(&rank) = selection
        .verdicts
        .keys()
        .find(|&&r| result.by_rank(r).is_none_or(|item| item.rank != r))
    {
        return Err(SynthesisError::UnexpectedVerdict(rank));
    }
    let mut support = Vec::new();
    for item in &result.items {
        match selection.verdicts.get(&item.rank) {
            None => return Err(SynthesisError::MissingVerdict(item.rank)),
            Some(SelectionVerdict::Precedent) => support.push(item),
            Some(SelectionVerdict::DoesNotApply) => {}
        }
    }
    if support.is_empty() {
        let all: Vec<&RetrievedCase> = result.items.iter().collect();
        Ok(from_support(&all, true))
    } else {
        Ok(from_support(&support, false))
    }
}

/// Treats every retrieved case as a precedent.
pub fn knn_decision(result: &RetrievalResult) -> Result<SynthesizedDecision, SynthesisError> {
    if result.items.is_empty() {
        return Err(SynthesisError::EmptyRetrieval);
    }
    let all: Vec<&RetrievedCase> = result.items.iter().collect();
    Ok(from_support(&all, false))
}

/// Upper bound: the judged gold whenever some retrieved case carries it,
/// otherwise the KNN decision.
pub fn oracle_decision(
    result: &RetrievalResult,
    gold: Decision,
) -> Result<SynthesizedDecision, SynthesisError> {
    if result.items.is_empty() {
        return Err(SynthesisError::EmptyRetrieval);
    }
    let matching: Vec<String> = result
        .items
        .iter()
        .filter(|i| i.gold == gold)
        .map(|i| i.case_id.clone())
        .collect();
    if matching.is_empty() {
        knn_decision(result)
    } else {
        Ok(SynthesizedDecision {
            value: gold,
            supporting: matching,
            tie_broken: false,
            fallback_used: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SelectionVerdict::{DoesNotApply as N, Precedent as P};

    fn result(items: &[(Decision, f64)]) -> RetrievalResult {
        RetrievalResult {
            judged_case_id: "q".into(),
            k: items.len(),
            items: items
                .iter()
                .enumerate()
                .map(|(i, (gold, sim))| RetrievedCase {
                    case_id: format!("c{}", i + 1),
                    similarity: *sim,
                    rank: i + 1,
                    gold: *gold,
                })
                .collect(),
        }
    }

    fn select(verdicts: &[SelectionVerdict]) -> PrecedentSelection {
        PrecedentSelection {
            judged_case_id: "q".into(),
            agent_id: "a".into(),
            verdicts: verdicts.iter().enumerate().map(|(i, v)| (i + 1, *v)).collect(),
            final_unconstrained: None,
        }
    }

    const K: Decision = Decision::KEEP;
    const R: Decision = Decision::REMOVE;

    #[test]
    fn plain_mode() {
        let r = result(&[(K, 0.9), (R, 0.8), (K, 0.7), (R, 0.6)]);
        let d = synthesize(&select(&[P, P, P, N]), &r).unwrap();
        assert_eq!(d.value, K);
        assert!(!d.tie_broken && !d.fallback_used);
        assert_eq!(d.supporting, ["c1", "c2", "c3"]);
    }

    #[test]
    fn nearest_case_breaks_ties() {
        let r = result(&[(K, 0.92), (R, 0.88)]);
        let d = synthesize(&select(&[P, P]), &r).unwrap();
        assert_eq!(d.value, K);
        assert!(d.tie_broken);

        let o = |l| Decision::Ordinal(l);
        // ranks need not follow similarity here; only similarity matters
        let r = result(&[(o(2), 0.9), (o(2), 0.5), (o(4), 0.95), (o(4), 0.4)]);
        let d = synthesize(&select(&[P, P, P, P]), &r).unwrap();
        assert_eq!(d.value, o(4));
        assert!(d.tie_broken);
    }

    #[test]
    fn equal_similarity_ties_fall_to_case_id() {
        let mut r = result(&[(R, 0.5), (K, 0.5)]);
        r.items[0].case_id = "b".into();
        r.items[1].case_id = "a".into();
        assert_eq!(synthesize(&select(&[P, P]), &r).unwrap().value, K);
    }

    #[test]
    fn falls_back_to_all_retrieved() {
        let r = result(&[(R, 0.9), (R, 0.8), (K, 0.7)]);
        let d = synthesize(&select(&[N, N, N]), &r).unwrap();
        assert_eq!(d.value, R);
        assert!(d.fallback_used);
        assert_eq!(d.supporting, ["c1", "c2", "c3"]);
    }

    #[test]
    fn errors() {
        let r = result(&[(K, 0.9), (R, 0.8)]);
        assert_eq!(synthesize(&select(&[P]), &r), Err(SynthesisError::MissingVerdict(2)));
        assert_eq!(synthesize(&select(&[P, P, P]), &r), Err(SynthesisError::UnexpectedVerdict(3)));
        assert_eq!(synthesize(&select(&[]), &result(&[])), Err(SynthesisError::EmptyRetrieval));
        assert_eq!(knn_decision(&result(&[])), Err(SynthesisError::EmptyRetrieval));
        assert_eq!(oracle_decision(&result(&[]), K), Err(SynthesisError::EmptyRetrieval));
        let mut s = select(&[P, P]);
        s.judged_case_id = "other".into();
        assert!(matches!(synthesize(&s, &r), Err(SynthesisError::JudgedCaseMismatch { .. })));
    }

    #[test]
    fn knn_examples() {
        let o = |l| Decision::Ordinal(l);
        assert_eq!(knn_decision(&result(&[(o(3), 0.9), (o(3), 0.8), (o(5), 0.95)])).unwrap().value, o(3));
        assert_eq!(knn_decision(&result(&[(o(2), 0.1)])).unwrap().value, o(2));
    }

    #[test]
    fn oracle_examples() {
        let o = |l| Decision::Ordinal(l);
        let r = result(&[(o(1), 0.9), (o(3), 0.8), (o(5), 0.7)]);
        assert_eq!(oracle_decision(&r, o(3)).unwrap().value, o(3));
        let r = result(&[(o(1), 0.7), (o(5), 0.9)]);
        let d = oracle_decision(&r, o(3)).unwrap();
        assert_eq!(d.value, o(5));
        assert!(d.tie_broken);
    }
}
