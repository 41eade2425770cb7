//! Metrics and the retrieval-window sweep.

mod kappa;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use kappa::{fleiss_kappa, fleiss_kappa_indices};
pub use stats::{
    accuracy, ln_gamma, mean_and_se, paired_t_test, regularized_incomplete_beta,
    students_t_two_sided, within_one, TTest,
};

use crate::agents::RuleDecisionRecord;
use crate::decision::{Decision, Domain};
use crate::retrieval::{restrict_window, RetrievalError, RetrievalResult};
use crate::synthesis::{knn_decision, oracle_decision, synthesize, PrecedentSelection, SynthesisError};

pub const DEFAULT_K_SET: [usize; 5] = [1, 3, 5, 10, 15];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("decision variants differ")]
    VariantMismatch,
    #[error("no cases to score")]
    Empty,
    #[error("paired test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("kappa needs at least 2 cases, got {0}")]
    TooFewCases(usize),
    #[error("kappa needs at least 2 annotators per case, got {0}")]
    TooFewAnnotators(usize),
    #[error("annotator count differs between cases")]
    RaggedMatrix,
    #[error("category index {0} out of range")]
    CategoryOutOfRange(usize),
    #[error("kappa undefined: all labels fall in one category")]
    UndefinedKappa,
    #[error("missing runs for condition {0}")]
    MissingRuns(String),
    #[error("no retrieval result for `{0}`")]
    MissingRetrieval(String),
    #[error("invalid window set: {0}")]
    InvalidKSet(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error("cannot write report: {0}")]
    Io(String),
}

/// Condition families a sweep can be asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Case,
    Rule,
    Knn,
    Oracle,
    HumanExample,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 5] = [
        ConditionKind::Case,
        ConditionKind::Knn,
        ConditionKind::Oracle,
        ConditionKind::Rule,
        ConditionKind::HumanExample,
    ];
}

impl FromStr for ConditionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "case" => Ok(ConditionKind::Case),
            "rule" => Ok(ConditionKind::Rule),
            "knn" => Ok(ConditionKind::Knn),
            "oracle" => Ok(ConditionKind::Oracle),
            "human_example" => Ok(ConditionKind::HumanExample),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

/// A concrete condition; window-dependent ones carry their `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionLabel {
    Case(usize),
    Rule,
    Knn(usize),
    Oracle(usize),
    HumanExample,
}

impl fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionLabel::Case(k) => write!(f, "CASE({k})"),
            ConditionLabel::Rule => f.write_str("RULE"),
            ConditionLabel::Knn(k) => write!(f, "KNN({k})"),
            ConditionLabel::Oracle(k) => write!(f, "ORACLE({k})"),
            ConditionLabel::HumanExample => f.write_str("HUMAN_EXAMPLE"),
        }
    }
}

impl Serialize for ConditionLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConditionLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let parse_k = |prefix: &str| -> Option<usize> {
            s.strip_prefix(prefix)?.strip_suffix(')')?.parse().ok()
        };
        match s.as_str() {
            "RULE" => Ok(ConditionLabel::Rule),
            "HUMAN_EXAMPLE" => Ok(ConditionLabel::HumanExample),
            _ => parse_k("CASE(")
                .map(ConditionLabel::Case)
                .or_else(|| parse_k("KNN(").map(ConditionLabel::Knn))
                .or_else(|| parse_k("ORACLE(").map(ConditionLabel::Oracle))
                .ok_or_else(|| serde::de::Error::custom(format!("bad condition label `{s}`"))),
        }
    }
}

/// Source label for KNN and ORACLE rows.
pub const REFERENCE_SOURCE: &str = "reference";

/// Everything a sweep reads. All of it is persisted by earlier pipeline
/// steps.
#[derive(Debug, Clone, Default)]
pub struct SweepInputs {
    pub domain: Option<Domain>,
    /// Evaluation cases per group: (case id, gold).
    pub groups: BTreeMap<String, Vec<(String, Decision)>>,
    /// Retrieval at the largest window, per judged case.
    pub retrieval: HashMap<String, RetrievalResult>,
    /// Case-condition selections per source (e.g. a run file or "human").
    pub case_runs: BTreeMap<String, Vec<PrecedentSelection>>,
    /// Rule-condition decisions per source.
    pub rule_runs: BTreeMap<String, Vec<RuleDecisionRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub group: String,
    pub k: usize,
    pub condition: ConditionLabel,
    pub source: String,
    pub accuracy: f64,
    pub standard_error: f64,
    pub n_cases: usize,
    /// Toxicity only: share of decisions within one level of gold. Not
    /// exact-match accuracy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_one_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub group: String,
    pub condition_a: ConditionLabel,
    pub source_a: String,
    pub condition_b: ConditionLabel,
    pub source_b: String,
    pub n_pairs: usize,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementMeasure {
    /// Over binding decisions synthesized from each annotator's selections.
    Derived,
    /// Over annotators' own unconstrained final decisions.
    Final,
    /// Over rule-condition decisions.
    Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementStatus {
    Ok,
    /// Every label in one category.
    Undefined,
    /// Fewer than two cases with the same two-or-more annotator count.
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub group: String,
    pub condition: ConditionLabel,
    pub source: String,
    pub measure: AgreementMeasure,
    pub n_cases: usize,
    pub n_annotators: usize,
    pub kappa: Option<f64>,
    pub status: AgreementStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domain: Option<Domain>,
    pub k_set: Vec<usize>,
    pub accuracy: Vec<AccuracyRow>,
    pub tests: Vec<TestRow>,
    pub agreement: Vec<AgreementRow>,
}

/// Per-case scores for one (group, condition, source): each case's score is
/// the mean correctness over the annotators who judged it.
#[derive(Debug, Default, Clone)]
struct CaseScores {
    correct: BTreeMap<String, Vec<f64>>,
    near: BTreeMap<String, Vec<f64>>,
    /// Per case: (annotator, decision).
    labels: BTreeMap<String, Vec<(String, Decision)>>,
}

impl CaseScores {
    fn push(&mut self, case_id: &str, annotator: &str, decision: Decision, gold: Decision) {
        let hit = |b: bool| if b { 1.0 } else { 0.0 };
        self.correct.entry(case_id.to_string()).or_default().push(hit(decision == gold));
        self.near.entry(case_id.to_string()).or_default().push(hit(within_one(decision, gold)));
        self.labels
            .entry(case_id.to_string())
            .or_default()
            .push((annotator.to_string(), decision));
    }

    fn per_case(map: &BTreeMap<String, Vec<f64>>) -> BTreeMap<&str, f64> {
        map.iter()
            .map(|(id, v)| (id.as_str(), v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    }

    fn row(&self, group: &str, k: usize, condition: ConditionLabel, source: &str, domain: Option<Domain>) -> Option<AccuracyRow> {
        if self.correct.is_empty() {
            return None;
        }
        let scores: Vec<f64> = Self::per_case(&self.correct).into_values().collect();
        let (accuracy, standard_error) = mean_and_se(&scores);
        let within_one_accuracy = (domain == Some(Domain::Toxicity)).then(|| {
            let near: Vec<f64> = Self::per_case(&self.near).into_values().collect();
            mean_and_se(&near).0
        });
        Some(AccuracyRow {
            group: group.to_string(),
            k,
            condition,
            source: source.to_string(),
            accuracy,
            standard_error,
            n_cases: scores.len(),
            within_one_accuracy,
        })
    }
}

fn agreement_row(
    group: &str,
    condition: ConditionLabel,
    source: &str,
    measure: AgreementMeasure,
    labels: &BTreeMap<String, Vec<(String, Decision)>>,
    domain: Domain,
) -> AgreementRow {
    // Fleiss needs a fixed annotator count; use the most common count >= 2
    // (larger count on ties) and the cases that have it.
    let mut by_count: BTreeMap<usize, usize> = BTreeMap::new();
    for v in labels.values() {
        if v.len() >= 2 {
            *by_count.entry(v.len()).or_default() += 1;
        }
    }
    let chosen = by_count
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
        .map(|(n, _)| *n);
    let matrix: Vec<Vec<Decision>> = match chosen {
        Some(n) => labels
            .values()
            .filter(|v| v.len() == n)
            .map(|v| v.iter().map(|(_, d)| *d).collect())
            .collect(),
        None => Vec::new(),
    };
    let (kappa, status) = if matrix.len() < 2 {
        (None, AgreementStatus::Insufficient)
    } else {
        match fleiss_kappa(&matrix, domain) {
            Ok(k) => (Some(k), AgreementStatus::Ok),
            Err(EvalError::UndefinedKappa) => (None, AgreementStatus::Undefined),
            Err(_) => (None, AgreementStatus::Insufficient),
        }
    };
    AgreementRow {
        group: group.to_string(),
        condition,
        source: source.to_string(),
        measure,
        n_cases: matrix.len(),
        n_annotators: chosen.unwrap_or(0),
        kappa,
        status,
    }
}

fn paired(
    a: &CaseScores,
    b: &CaseScores,
) -> Option<(usize, TTest)> {
    let pa = CaseScores::per_case(&a.correct);
    let pb = CaseScores::per_case(&b.correct);
    let (xs, ys): (Vec<f64>, Vec<f64>) = pa
        .iter()
        .filter_map(|(id, x)| pb.get(id).map(|y| (*x, *y)))
        .unzip();
    paired_t_test(&xs, &ys).ok().map(|t| (xs.len(), t))
}

fn validate_k_set(k_set: &[usize], inputs: &SweepInputs) -> Result<Vec<usize>, EvalError> {
    if k_set.is_empty() {
        return Err(EvalError::InvalidKSet("empty".into()));
    }
    let k_max = inputs.retrieval.values().map(|r| r.k).min().unwrap_or(usize::MAX);
    let mut ks: Vec<usize> = k_set.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    ks.sort_unstable();
    if ks[0] == 0 {
        return Err(EvalError::InvalidKSet("k must be at least 1".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k > k_max) {
        return Err(EvalError::InvalidKSet(format!("k={k} exceeds retrieved window {k_max}")));
    }
    Ok(ks)
}

/// Scores every requested condition at every window in `k_set`, per group.
///
/// CASE(k) decisions come from restricting each selection to the first `k`
/// ranks and synthesizing over the truncated retrieval. Window-independent
/// conditions (RULE, HUMAN_EXAMPLE) are repeated at each `k` so the CSV
/// plots directly against `k`. Pure over its inputs.
pub fn run_sweep(
    inputs: &SweepInputs,
    conditions: &[ConditionKind],
    k_set: &[usize],
) -> Result<EvalReport, EvalError> {
    let ks = validate_k_set(k_set, inputs)?;
    let wants = |c: ConditionKind| conditions.contains(&c);
    if wants(ConditionKind::Case) && inputs.case_runs.values().all(Vec::is_empty) {
        return Err(EvalError::MissingRuns("CASE".into()));
    }
    if wants(ConditionKind::Rule) && inputs.rule_runs.values().all(Vec::is_empty) {
        return Err(EvalError::MissingRuns("RULE".into()));
    }
    let has_final = inputs
        .case_runs
        .values()
        .flatten()
        .any(|s| s.final_unconstrained.is_some());
    if wants(ConditionKind::HumanExample) && !has_final {
        return Err(EvalError::MissingRuns("HUMAN_EXAMPLE".into()));
    }

    // index selections and rule decisions by judged case
    let mut case_by_case: BTreeMap<&str, BTreeMap<&str, Vec<&PrecedentSelection>>> = BTreeMap::new();
    for (source, sels) in &inputs.case_runs {
        for s in sels {
            case_by_case
                .entry(source)
                .or_default()
                .entry(&s.judged_case_id)
                .or_default()
                .push(s);
        }
    }
    let mut rule_by_case: BTreeMap<&str, BTreeMap<&str, Vec<&RuleDecisionRecord>>> = BTreeMap::new();
    for (source, recs) in &inputs.rule_runs {
        for r in recs {
            rule_by_case
                .entry(source)
                .or_default()
                .entry(&r.judged_case_id)
                .or_default()
                .push(r);
        }
    }

    let domain = inputs.domain;
    let mut accuracy_rows = Vec::new();
    let mut tests = Vec::new();
    let mut agreement = Vec::new();

    for (group, cases) in &inputs.groups {
        let group_domain = domain.or_else(|| cases.first().map(|(_, g)| g.domain()));

        // window-independent conditions
        let mut rule_scores: BTreeMap<&str, CaseScores> = BTreeMap::new();
        if wants(ConditionKind::Rule) {
            for (source, by_case) in &rule_by_case {
                let scores = rule_scores.entry(source).or_default();
                for (id, gold) in cases {
                    for r in by_case.get(id.as_str()).into_iter().flatten() {
                        scores.push(id, &r.agent_id, r.decision, *gold);
                    }
                }
            }
        }
        let mut example_scores: BTreeMap<&str, CaseScores> = BTreeMap::new();
        if wants(ConditionKind::HumanExample) {
            for (source, by_case) in &case_by_case {
                let scores = example_scores.entry(source).or_default();
                for (id, gold) in cases {
                    for s in by_case.get(id.as_str()).into_iter().flatten() {
                        if let Some(d) = s.final_unconstrained {
                            scores.push(id, &s.agent_id, d, *gold);
                        }
                    }
                }
            }
        }

        for &k in &ks {
            let mut knn = CaseScores::default();
            let mut oracle = CaseScores::default();
            let mut case_scores: BTreeMap<&str, CaseScores> = BTreeMap::new();
            for (id, gold) in cases {
                let full = inputs
                    .retrieval
                    .get(id)
                    .ok_or_else(|| EvalError::MissingRetrieval(id.clone()))?;
                let window = full.truncate(k)?;
                if wants(ConditionKind::Knn) {
                    knn.push(id, REFERENCE_SOURCE, knn_decision(&window)?.value, *gold);
                }
                if wants(ConditionKind::Oracle) {
                    oracle.push(id, REFERENCE_SOURCE, oracle_decision(&window, *gold)?.value, *gold);
                }
                if wants(ConditionKind::Case) {
                    for (source, by_case) in &case_by_case {
                        let scores = case_scores.entry(source).or_default();
                        for s in by_case.get(id.as_str()).into_iter().flatten() {
                            let restricted = restrict_window(s, full, k)?;
                            let derived = synthesize(&restricted, &window)?;
                            scores.push(id, &s.agent_id, derived.value, *gold);
                        }
                    }
                }
            }

            for kind in conditions {
                match kind {
                    ConditionKind::Case => {
                        for (source, s) in &case_scores {
                            accuracy_rows.extend(s.row(group, k, ConditionLabel::Case(k), source, group_domain));
                        }
                    }
                    ConditionKind::Knn => {
                        accuracy_rows.extend(knn.row(group, k, ConditionLabel::Knn(k), REFERENCE_SOURCE, group_domain));
                    }
                    ConditionKind::Oracle => {
                        accuracy_rows.extend(oracle.row(group, k, ConditionLabel::Oracle(k), REFERENCE_SOURCE, group_domain));
                    }
                    ConditionKind::Rule => {
                        for (source, s) in &rule_scores {
                            accuracy_rows.extend(s.row(group, k, ConditionLabel::Rule, source, group_domain));
                        }
                    }
                    ConditionKind::HumanExample => {
                        for (source, s) in &example_scores {
                            accuracy_rows.extend(s.row(group, k, ConditionLabel::HumanExample, source, group_domain));
                        }
                    }
                }
            }

            for (source, s) in &case_scores {
                if wants(ConditionKind::Knn) {
                    if let Some((n, t)) = paired(s, &knn) {
                        tests.push(TestRow {
                            group: group.clone(),
                            condition_a: ConditionLabel::Case(k),
                            source_a: source.to_string(),
                            condition_b: ConditionLabel::Knn(k),
                            source_b: REFERENCE_SOURCE.into(),
                            n_pairs: n,
                            t: t.t,
                            p: t.p,
                        });
                    }
                }
                if k == *ks.last().expect("non-empty k set") {
                    for (rule_source, r) in &rule_scores {
                        if let Some((n, t)) = paired(s, r) {
                            tests.push(TestRow {
                                group: group.clone(),
                                condition_a: ConditionLabel::Case(k),
                                source_a: source.to_string(),
                                condition_b: ConditionLabel::Rule,
                                source_b: rule_source.to_string(),
                                n_pairs: n,
                                t: t.t,
                                p: t.p,
                            });
                        }
                    }
                }
                if let Some(d) = group_domain {
                    agreement.push(agreement_row(
                        group,
                        ConditionLabel::Case(k),
                        source,
                        AgreementMeasure::Derived,
                        &s.labels,
                        d,
                    ));
                }
            }
        }

        if let Some(d) = group_domain {
            for (source, s) in &example_scores {
                if !s.labels.is_empty() {
                    agreement.push(agreement_row(
                        group,
                        ConditionLabel::HumanExample,
                        source,
                        AgreementMeasure::Final,
                        &s.labels,
                        d,
                    ));
                }
            }
            for (source, s) in &rule_scores {
                agreement.push(agreement_row(
                    group,
                    ConditionLabel::Rule,
                    source,
                    AgreementMeasure::Decision,
                    &s.labels,
                    d,
                ));
            }
        }
    }

    Ok(EvalReport {
        domain,
        k_set: ks,
        accuracy: accuracy_rows,
        tests,
        agreement,
    })
}

fn csv_err(e: impl fmt::Display) -> EvalError {
    EvalError::Io(e.to_string())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Accuracy rows, one per (group, k, condition, source).
    pub fn accuracy_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "group",
            "k",
            "condition",
            "source",
            "accuracy",
            "standard_error",
            "n_cases",
            "within_one_accuracy",
        ])
        .map_err(csv_err)?;
        for r in &self.accuracy {
            w.write_record([
                r.group.clone(),
                r.k.to_string(),
                r.condition.to_string(),
                r.source.clone(),
                r.accuracy.to_string(),
                r.standard_error.to_string(),
                r.n_cases.to_string(),
                fmt_opt(r.within_one_accuracy),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
    }

    pub fn tests_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["group", "condition_a", "source_a", "condition_b", "source_b", "n_pairs", "t", "p"])
            .map_err(csv_err)?;
        for r in &self.tests {
            w.write_record([
                r.group.clone(),
                r.condition_a.to_string(),
                r.source_a.clone(),
                r.condition_b.to_string(),
                r.source_b.clone(),
                r.n_pairs.to_string(),
                r.t.to_string(),
                r.p.to_string(),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
    }

    pub fn agreement_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["group", "condition", "source", "measure", "n_cases", "n_annotators", "kappa", "status"])
            .map_err(csv_err)?;
        for r in &self.agreement {
            let measure = serde_json::to_value(r.measure).expect("serializes");
            let status = serde_json::to_value(r.status).expect("serializes");
            w.write_record([
                r.group.clone(),
                r.condition.to_string(),
                r.source.clone(),
                measure.as_str().unwrap_or_default().to_string(),
                r.n_cases.to_string(),
                r.n_annotators.to_string(),
                fmt_opt(r.kappa),
                status.as_str().unwrap_or_default().to_string(),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
    }

    /// Writes `report.json`, `accuracy.csv`, `tests.csv` and `agreement.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(csv_err)?;
        std::fs::write(dir.join("report.json"), self.to_json()).map_err(csv_err)?;
        std::fs::write(dir.join("accuracy.csv"), self.accuracy_csv()?).map_err(csv_err)?;
        std::fs::write(dir.join("tests.csv"), self.tests_csv()?).map_err(csv_err)?;
        std::fs::write(dir.join("agreement.csv"), self.agreement_csv()?).map_err(csv_err)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::RetrievedCase;
    use crate::synthesis::SelectionVerdict;

    const K: Decision = Decision::KEEP;
    const R: Decision = Decision::REMOVE;

    fn result(id: &str, golds: &[Decision]) -> RetrievalResult {
        RetrievalResult {
            judged_case_id: id.into(),
            k: golds.len(),
            items: golds
                .iter()
                .enumerate()
                .map(|(i, g)| RetrievedCase {
                    case_id: format!("{id}-p{i}"),
                    similarity: 0.9 - i as f64 * 0.01,
                    rank: i + 1,
                    gold: *g,
                })
                .collect(),
        }
    }

    fn inputs() -> SweepInputs {
        let mut inputs = SweepInputs {
            domain: Some(Domain::Mod),
            ..Default::default()
        };
        for (group, prefix) in [("g1", "a"), ("g2", "b")] {
            let mut cases = vec![];
            for i in 0..6 {
                let id = format!("{prefix}{i}");
                let gold = if i % 2 == 0 { K } else { R };
                let golds: Vec<Decision> = (0..15).map(|j| if (j % 3 == 0) == (i % 2 == 0) { K } else { R }).collect();
                inputs.retrieval.insert(id.clone(), result(&id, &golds));
                cases.push((id, gold));
            }
            inputs.groups.insert(group.into(), cases);
        }
        let all_ids: Vec<String> = inputs.retrieval.keys().cloned().collect();
        let mut sels = vec![];
        let mut rules = vec![];
        for id in &all_ids {
            for agent in ["h1", "h2", "h3"] {
                let mut s = PrecedentSelection::uniform(id, agent, &inputs.retrieval[id], SelectionVerdict::Precedent);
                s.final_unconstrained = Some(if agent == "h1" { K } else { R });
                sels.push(s);
                rules.push(RuleDecisionRecord {
                    judged_case_id: id.clone(),
                    agent_id: agent.into(),
                    decision: if agent == "h3" { K } else { R },
                    rule_checks: vec![],
                    rationale: None,
                });
            }
        }
        inputs.case_runs.insert("human".into(), sels);
        inputs.rule_runs.insert("human".into(), rules);
        inputs
    }

    const FOUR: [ConditionKind; 4] = [ConditionKind::Case, ConditionKind::Knn, ConditionKind::Oracle, ConditionKind::Rule];

    #[test]
    fn row_cardinality() {
        let report = run_sweep(&inputs(), &FOUR, &DEFAULT_K_SET).unwrap();
        assert_eq!(report.accuracy.len(), 40);
    }

    #[test]
    fn oracle_dominates_and_all_precedent_equals_knn() {
        let report = run_sweep(&inputs(), &FOUR, &DEFAULT_K_SET).unwrap();
        for g in ["g1", "g2"] {
            for k in DEFAULT_K_SET {
                let find = |c: ConditionLabel| {
                    report.accuracy.iter().find(|r| r.group == g && r.k == k && r.condition == c).unwrap().accuracy
                };
                assert!(find(ConditionLabel::Oracle(k)) >= find(ConditionLabel::Knn(k)));
                assert_eq!(find(ConditionLabel::Case(k)), find(ConditionLabel::Knn(k)));
            }
        }
    }

    #[test]
    fn sweep_is_idempotent() {
        let i = inputs();
        let a = run_sweep(&i, &ConditionKind::ALL, &DEFAULT_K_SET).unwrap();
        let b = run_sweep(&i, &ConditionKind::ALL, &DEFAULT_K_SET).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.accuracy_csv().unwrap(), b.accuracy_csv().unwrap());
    }

    #[test]
    fn agreement_is_reported() {
        let report = run_sweep(&inputs(), &ConditionKind::ALL, &[15]).unwrap();
        let rule = report
            .agreement
            .iter()
            .find(|a| a.group == "g1" && a.condition == ConditionLabel::Rule)
            .unwrap();
        assert_eq!(rule.n_annotators, 3);
        assert_eq!(rule.n_cases, 6);
        // every case labelled (remove, remove, keep)
        assert!(rule.kappa.unwrap() < 0.0);
        let derived = report
            .agreement
            .iter()
            .find(|a| a.group == "g1" && a.condition == ConditionLabel::Case(15))
            .unwrap();
        // identical all-precedent selections agree perfectly, with variation across cases
        assert_eq!(derived.kappa, Some(1.0));
    }

    #[test]
    fn missing_runs() {
        let mut i = inputs();
        i.rule_runs.clear();
        assert!(matches!(run_sweep(&i, &FOUR, &DEFAULT_K_SET), Err(EvalError::MissingRuns(c)) if c == "RULE"));
        let mut i = inputs();
        i.case_runs.clear();
        assert!(matches!(run_sweep(&i, &FOUR, &DEFAULT_K_SET), Err(EvalError::MissingRuns(c)) if c == "CASE"));
        assert!(matches!(run_sweep(&inputs(), &FOUR, &[20]), Err(EvalError::InvalidKSet(_))));
    }

    #[test]
    fn label_round_trip() {
        for l in [
            ConditionLabel::Case(5),
            ConditionLabel::Rule,
            ConditionLabel::Knn(1),
            ConditionLabel::Oracle(15),
            ConditionLabel::HumanExample,
        ] {
            let s = serde_json::to_string(&l).unwrap();
            assert_eq!(serde_json::from_str::<ConditionLabel>(&s).unwrap(), l);
        }
    }
}
