//! Browser demo: precedent synthesis across retrieval windows, Fleiss
//! kappa, and the controversy score. Every export takes and returns JSON
//! so the page needs no bindings beyond strings.
//!
//! The `*_json` functions carry the logic and are what native tests call;
//! the `#[wasm_bindgen]` wrappers only convert errors.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use clg::corpus::{controversy_score, Case, GroupKind, GroupSpec, RawRating};
use clg::evaluation::fleiss_kappa;
use clg::retrieval::{restrict_window, RetrievalResult, RetrievedCase};
use clg::synthesis::{knn_decision, oracle_decision, synthesize, PrecedentSelection, SelectionVerdict};
use clg::{Decision, Domain};

#[derive(Deserialize)]
struct Candidate {
    case_id: String,
    similarity: f64,
    gold: Decision,
    precedent: bool,
}

#[derive(Deserialize)]
struct SweepInput {
    /// Gold of the judged case, for the ORACLE column.
    gold: Decision,
    /// In any order; ranked here by similarity then id.
    candidates: Vec<Candidate>,
}

#[derive(Serialize)]
struct WindowRow {
    k: usize,
    case: Decision,
    case_fallback: bool,
    case_tie_broken: bool,
    knn: Decision,
    oracle: Decision,
    supporting: Vec<String>,
}

/// CASE, KNN and ORACLE decisions for every window `k = 1..=n`.
pub fn sweep_json(input: &str) -> Result<String, String> {
    let input: SweepInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    if input.candidates.is_empty() {
        return Err("no candidates".into());
    }
    let mut cands = input.candidates;
    cands.sort_by(|a, b| clg::retrieval::rank_order((a.similarity, &a.case_id), (b.similarity, &b.case_id)));
    let domain = input.gold.domain();
    if let Some(c) = cands.iter().find(|c| c.gold.domain() != domain) {
        return Err(format!("candidate {} has a {} gold in a {domain} sweep", c.case_id, c.gold));
    }
    let full = RetrievalResult {
        judged_case_id: "judged".into(),
        k: cands.len(),
        items: cands
            .iter()
            .enumerate()
            .map(|(i, c)| RetrievedCase {
                case_id: c.case_id.clone(),
                similarity: c.similarity,
                rank: i + 1,
                gold: c.gold,
            })
            .collect(),
    };
    let selection = PrecedentSelection {
        judged_case_id: "judged".into(),
        agent_id: "you".into(),
        verdicts: cands
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let v = if c.precedent { SelectionVerdict::Precedent } else { SelectionVerdict::DoesNotApply };
                (i + 1, v)
            })
            .collect(),
        final_unconstrained: None,
    };
    let mut rows = Vec::with_capacity(cands.len());
    for k in 1..=cands.len() {
        let window = full.truncate(k).map_err(|e| e.to_string())?;
        let sel = restrict_window(&selection, &full, k).map_err(|e| e.to_string())?;
        let case = synthesize(&sel, &window).map_err(|e| e.to_string())?;
        let knn = knn_decision(&window).map_err(|e| e.to_string())?;
        let oracle = oracle_decision(&window, input.gold).map_err(|e| e.to_string())?;
        rows.push(WindowRow {
            k,
            case: case.value,
            case_fallback: case.fallback_used,
            case_tie_broken: case.tie_broken,
            knn: knn.value,
            oracle: oracle.value,
            supporting: case.supporting,
        });
    }
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
struct KappaInput {
    domain: Domain,
    /// One row per item, one label per rater.
    labels: Vec<Vec<Decision>>,
}

/// Fleiss kappa over a ratings matrix. Returns `{"kappa": x}`.
pub fn kappa_json(input: &str) -> Result<String, String> {
    let input: KappaInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let k = fleiss_kappa(&input.labels, input.domain).map_err(|e| e.to_string())?;
    Ok(serde_json::json!({ "kappa": k }).to_string())
}

#[derive(Deserialize)]
struct ControversyInput {
    groups: Vec<String>,
    /// `[group, level]` pairs.
    ratings: Vec<RawRating>,
}

/// Controversy score of one comment's raw ratings. Returns `{"score": x}`.
pub fn controversy_json(input: &str) -> Result<String, String> {
    let input: ControversyInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    if let Some(r) = input.ratings.iter().find(|r| !(1..=5).contains(&r.1)) {
        return Err(format!("rating {} from {} is outside 1..=5", r.1, r.0));
    }
    let groups: Vec<GroupSpec> = input.groups.iter().map(|g| GroupSpec::new(g, GroupKind::Demographic)).collect();
    let case = Case {
        id: "comment".into(),
        text: String::new(),
        group_id: input.groups.first().cloned().unwrap_or_default(),
        gold: Decision::Ordinal(1),
        raw_ratings: Some(input.ratings),
    };
    let s = controversy_score(&case, &groups).map_err(|e| e.to_string())?;
    Ok(serde_json::json!({ "score": s }).to_string())
}

#[wasm_bindgen]
pub fn sweep(input: &str) -> Result<String, JsError> {
    sweep_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn kappa(input: &str) -> Result<String, JsError> {
    kappa_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn controversy(input: &str) -> Result<String, JsError> {
    controversy_json(input).map_err(|e| JsError::new(&e))
}
