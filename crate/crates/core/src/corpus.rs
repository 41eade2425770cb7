//! Case corpora: loading, controversy-based sampling, and the
//! precedent/evaluation split with evaluation batches.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decision::{Decision, Domain};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate case id `{0}`")]
    DuplicateId(String),
    #[error("line {line}: decision variant differs from earlier records")]
    MixedDecisionVariants { line: usize },
    #[error("corpus decisions are {found} but domain is {expected}")]
    DomainMismatch { expected: Domain, found: Domain },
    #[error("case `{0}` has no raw ratings")]
    MissingRatings(String),
    #[error("group `{0}` has no ratings for this case")]
    EmptyGroup(String),
    #[error("requested {requested} cases but corpus holds {available}")]
    TooFewCases { requested: usize, available: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("batch size must be positive")]
    InvalidBatchSize,
}

/// One rating from a rater belonging to `group_id`, level 1..=5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRating(pub String, pub u8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub id: String,
    pub text: String,
    pub group_id: String,
    pub gold: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_ratings: Option<Vec<RawRating>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Community,
    Demographic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub id: String,
    pub kind: GroupKind,
    pub label: String,
}

impl GroupSpec {
    pub fn new(id: &str, kind: GroupKind) -> Self {
        GroupSpec {
            id: id.to_string(),
            kind,
            label: id.to_string(),
        }
    }

    /// The communities and rater groups the moderation and toxicity tasks are
    /// partitioned into.
    pub fn defaults(domain: Domain) -> Vec<GroupSpec> {
        match domain {
            Domain::Mod => ["r/Games", "r/Coronavirus", "r/AmItheAsshole"]
                .iter()
                .map(|id| GroupSpec::new(id, GroupKind::Community))
                .collect(),
            Domain::Toxicity => ["seen=Y,targeted=N", "seen=N,targeted=N", "seen=Y,targeted=Y"]
                .iter()
                .map(|id| GroupSpec::new(id, GroupKind::Demographic))
                .collect(),
        }
    }
}

/// A validated, immutable set of cases sharing one decision variant.
#[derive(Debug, Clone)]
pub struct Corpus {
    domain: Domain,
    cases: Vec<Case>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(domain: Domain, cases: Vec<Case>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(cases.len());
        for (i, case) in cases.iter().enumerate() {
            if case.text.is_empty() {
                return Err(CorpusError::MalformedRecord {
                    line: i + 1,
                    reason: "empty text".into(),
                });
            }
            if case.gold.domain() != domain {
                return Err(CorpusError::DomainMismatch {
                    expected: domain,
                    found: case.gold.domain(),
                });
            }
            if by_id.insert(case.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(case.id.clone()));
            }
        }
        Ok(Corpus {
            domain,
            cases,
            by_id,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Case> {
        self.by_id.get(id).map(|&i| &self.cases[i])
    }

    /// Distinct group ids in first-appearance order.
    pub fn group_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.cases
            .iter()
            .filter(|c| seen.insert(c.group_id.as_str()))
            .map(|c| c.group_id.clone())
            .collect()
    }

    pub fn for_group(&self, group_id: &str) -> Corpus {
        let cases = self
            .cases
            .iter()
            .filter(|c| c.group_id == group_id)
            .cloned()
            .collect();
        Corpus::new(self.domain, cases).expect("subset of a valid corpus is valid")
    }

    /// Sub-corpus of the given ids, in the order given. Unknown ids are skipped.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Corpus {
        let cases = ids.into_iter().filter_map(|id| self.get(id)).cloned().collect();
        Corpus::new(self.domain, cases).expect("subset of a valid corpus is valid")
    }

    /// SHA-256 over the canonical JSON of every case in order, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.domain.to_string().as_bytes());
        for case in &self.cases {
            h.update(serde_json::to_vec(case).expect("case serializes"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Loads a JSONL corpus, one case per line.
pub fn load_corpus(path: &Path, domain: Domain) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, domain)
}

pub fn parse_corpus(text: &str, domain: Domain) -> Result<Corpus, CorpusError> {
    let mut cases = Vec::new();
    let mut ids = HashSet::new();
    let mut variant: Option<Domain> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let case: Case =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        if case.text.trim().is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: line_no,
                reason: "empty text".into(),
            });
        }
        if let Some(bad) = case
            .raw_ratings
            .iter()
            .flatten()
            .find(|r| !(1..=5).contains(&r.1))
        {
            return Err(CorpusError::MalformedRecord {
                line: line_no,
                reason: format!("raw rating {} outside 1..=5", bad.1),
            });
        }
        match variant {
            None => variant = Some(case.gold.domain()),
            Some(v) if v != case.gold.domain() => {
                return Err(CorpusError::MixedDecisionVariants { line: line_no })
            }
            Some(_) => {}
        }
        if !ids.insert(case.id.clone()) {
            return Err(CorpusError::DuplicateId(case.id));
        }
        cases.push(case);
    }
    if let Some(found) = variant {
        if found != domain {
            return Err(CorpusError::DomainMismatch {
                expected: domain,
                found,
            });
        }
    }
    Corpus::new(domain, cases)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by N).
fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Between-group deviation minus within-group deviation of a case's raw
/// ratings. High scores mark cases groups disagree on but that each group
/// rates consistently.
pub fn controversy_score(case: &Case, groups: &[GroupSpec]) -> Result<f64, CorpusError> {
    let ratings = case
        .raw_ratings
        .as_ref()
        .ok_or_else(|| CorpusError::MissingRatings(case.id.clone()))?;
    let mut group_means = Vec::with_capacity(groups.len());
    let mut group_stds = Vec::with_capacity(groups.len());
    for g in groups {
        let values: Vec<f64> = ratings
            .iter()
            .filter(|r| r.0 == g.id)
            .map(|r| f64::from(r.1))
            .collect();
        if values.is_empty() {
            return Err(CorpusError::EmptyGroup(g.id.clone()));
        }
        group_means.push(mean(&values));
        group_stds.push(population_std(&values));
    }
    if groups.is_empty() {
        return Ok(0.0);
    }
    Ok(population_std(&group_means) - mean(&group_stds))
}

/// The `n` most controversial cases, highest score first, ties by ascending id.
pub fn select_controversial(
    corpus: &Corpus,
    n: usize,
    groups: &[GroupSpec],
) -> Result<Corpus, CorpusError> {
    if n > corpus.len() {
        return Err(CorpusError::TooFewCases {
            requested: n,
            available: corpus.len(),
        });
    }
    let mut scored = corpus
        .cases()
        .iter()
        .map(|c| controversy_score(c, groups).map(|s| (s, c)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    let cases = scored.into_iter().take(n).map(|(_, c)| c.clone()).collect();
    Corpus::new(corpus.domain(), cases)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub index: usize,
    pub case_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    /// Sorted by id.
    pub precedent_portion: Vec<String>,
    /// Sorted by id.
    pub evaluation_portion: Vec<String>,
    /// Evaluation cases in shuffled order, chunked.
    pub batches: Vec<Batch>,
    pub seed: u64,
}

/// Shuffles the corpus with `seed` and halves it into precedent and
/// evaluation portions; the precedent portion takes the extra case when the
/// size is odd. The evaluation portion is cut into batches of `batch_size`.
///
/// Cases are sorted by id before shuffling, so the split depends only on the
/// set of ids and the seed.
pub fn split_and_batch(
    corpus: &Corpus,
    seed: u64,
    batch_size: usize,
) -> Result<CorpusSplit, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if batch_size == 0 {
        return Err(CorpusError::InvalidBatchSize);
    }
    let mut ids: Vec<String> = corpus.cases().iter().map(|c| c.id.clone()).collect();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n_precedent = corpus.len().div_ceil(2);
    let evaluation_order = ids.split_off(n_precedent);
    let batches = evaluation_order
        .chunks(batch_size)
        .enumerate()
        .map(|(index, chunk)| Batch {
            index,
            case_ids: chunk.to_vec(),
        })
        .collect();
    let mut precedent_portion = ids;
    precedent_portion.sort();
    let mut evaluation_portion = evaluation_order;
    evaluation_portion.sort();
    Ok(CorpusSplit {
        precedent_portion,
        evaluation_portion,
        batches,
        seed,
    })
}

/// Per-group splits, keyed by group id.
pub type GroupSplits = BTreeMap<String, CorpusSplit>;

/// Splits each group independently with the same seed.
pub fn split_groups(
    corpus: &Corpus,
    seed: u64,
    batch_size: usize,
) -> Result<GroupSplits, CorpusError> {
    corpus
        .group_ids()
        .into_iter()
        .map(|g| {
            let split = split_and_batch(&corpus.for_group(&g), seed, batch_size)?;
            Ok((g, split))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn case(id: &str, ratings: &[(&str, u8)]) -> Case {
        Case {
            id: id.into(),
            text: format!("text of {id}"),
            group_id: "g".into(),
            gold: Decision::Ordinal(3),
            raw_ratings: Some(ratings.iter().map(|(g, r)| RawRating(g.to_string(), *r)).collect()),
        }
    }

    fn groups(ids: &[&str]) -> Vec<GroupSpec> {
        ids.iter().map(|id| GroupSpec::new(id, GroupKind::Demographic)).collect()
    }

    /// Explicit-loop population std, independent of the helpers above.
    fn brute_std(xs: &[f64]) -> f64 {
        let mut sum = 0.0;
        for x in xs {
            sum += x;
        }
        let m = sum / xs.len() as f64;
        let mut ss = 0.0;
        for x in xs {
            ss += (x - m).powi(2);
        }
        (ss / xs.len() as f64).sqrt()
    }

    fn brute_controversy(ratings: &[(String, u8)], group_ids: &[String]) -> f64 {
        let mut means = vec![];
        let mut stds = vec![];
        for g in group_ids {
            let mut vals = vec![];
            for (rg, r) in ratings {
                if rg == g {
                    vals.push(*r as f64);
                }
            }
            let mut s = 0.0;
            for v in &vals {
                s += v;
            }
            means.push(s / vals.len() as f64);
            stds.push(brute_std(&vals));
        }
        let mut within = 0.0;
        for s in &stds {
            within += s;
        }
        brute_std(&means) - within / stds.len() as f64
    }

    #[test]
    fn controversy_examples() {
        let gs = groups(&["A", "B"]);
        let c = case("c", &[("A", 1), ("A", 1), ("B", 5), ("B", 5)]);
        assert_eq!(controversy_score(&c, &gs).unwrap(), 2.0);
        let c = case("c", &[("A", 3), ("A", 3), ("B", 3)]);
        assert_eq!(controversy_score(&c, &gs).unwrap(), 0.0);
        let c = case("c", &[("A", 2), ("A", 4), ("B", 2), ("B", 4)]);
        assert_eq!(controversy_score(&c, &gs).unwrap(), -1.0);
    }

    #[test]
    fn controversy_errors() {
        let gs = groups(&["A", "B"]);
        let c = case("c", &[("A", 1)]);
        assert!(matches!(controversy_score(&c, &gs), Err(CorpusError::EmptyGroup(g)) if g == "B"));
        let mut c = case("c", &[]);
        c.raw_ratings = None;
        assert!(matches!(controversy_score(&c, &gs), Err(CorpusError::MissingRatings(_))));
    }

    fn scored_corpus() -> Corpus {
        // c1: 2.0, c2: 0.0, c3: -1.0, c4: 2.0
        let cases = vec![
            case("c3", &[("A", 2), ("A", 4), ("B", 2), ("B", 4)]),
            case("c1", &[("A", 1), ("A", 1), ("B", 5), ("B", 5)]),
            case("c2", &[("A", 3), ("B", 3)]),
        ];
        Corpus::new(Domain::Toxicity, cases).unwrap()
    }

    #[test]
    fn select_controversial_examples() {
        let gs = groups(&["A", "B"]);
        let corpus = scored_corpus();
        let all = select_controversial(&corpus, 3, &gs).unwrap();
        let ids: Vec<_> = all.cases().iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["c1", "c2", "c3"]);

        let top2 = select_controversial(&corpus, 2, &gs).unwrap();
        let ids: Vec<_> = top2.cases().iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["c1", "c2"]);

        let mut cases = corpus.cases().to_vec();
        cases.push(case("c0", &[("A", 1), ("A", 1), ("B", 5), ("B", 5)]));
        let tied = Corpus::new(Domain::Toxicity, cases).unwrap();
        let top1 = select_controversial(&tied, 1, &gs).unwrap();
        assert_eq!(top1.cases()[0].id, "c0");

        assert!(matches!(
            select_controversial(&corpus, 4, &gs),
            Err(CorpusError::TooFewCases { requested: 4, available: 3 })
        ));
    }

    fn line(id: &str, gold: &str) -> String {
        format!(r#"{{"id":"{id}","text":"hello {id}","group_id":"r/Games","gold":{gold}}}"#)
    }

    #[test]
    fn load_examples() {
        let text = [line("a", r#""keep""#), line("b", r#""remove""#)].join("\n");
        let c = parse_corpus(&text, Domain::Mod).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.cases().iter().all(|c| c.gold.domain() == Domain::Mod));

        let dup = [line("c1", r#""keep""#), line("c1", r#""remove""#)].join("\n");
        assert!(matches!(parse_corpus(&dup, Domain::Mod), Err(CorpusError::DuplicateId(id)) if id == "c1"));

        let bad = [line("a", "3"), line("b", "6")].join("\n");
        assert!(matches!(
            parse_corpus(&bad, Domain::Toxicity),
            Err(CorpusError::MalformedRecord { line: 2, .. })
        ));

        let mixed = [line("a", "3"), line("b", r#""keep""#)].join("\n");
        assert!(matches!(
            parse_corpus(&mixed, Domain::Toxicity),
            Err(CorpusError::MixedDecisionVariants { line: 2 })
        ));

        let wrong = line("a", "3");
        assert!(matches!(parse_corpus(&wrong, Domain::Mod), Err(CorpusError::DomainMismatch { .. })));

        let empty_text = r#"{"id":"a","text":"","group_id":"g","gold":"keep"}"#;
        assert!(matches!(parse_corpus(empty_text, Domain::Mod), Err(CorpusError::MalformedRecord { line: 1, .. })));

        let bad_rating = r#"{"id":"a","text":"x","group_id":"g","gold":2,"raw_ratings":[["A",9]]}"#;
        assert!(matches!(parse_corpus(bad_rating, Domain::Toxicity), Err(CorpusError::MalformedRecord { .. })));
    }

    fn n_cases(n: usize) -> Corpus {
        let cases = (0..n)
            .map(|i| Case {
                id: format!("c{i:03}"),
                text: format!("case {i}"),
                group_id: "g".into(),
                gold: Decision::KEEP,
                raw_ratings: None,
            })
            .collect();
        Corpus::new(Domain::Mod, cases).unwrap()
    }

    #[test]
    fn split_examples() {
        let s = split_and_batch(&n_cases(20), 7, 10).unwrap();
        assert_eq!(s.precedent_portion.len(), 10);
        assert_eq!(s.evaluation_portion.len(), 10);
        assert_eq!(s.batches.len(), 1);
        assert_eq!(s.batches[0].case_ids.len(), 10);
        assert_eq!(s, split_and_batch(&n_cases(20), 7, 10).unwrap());

        let s = split_and_batch(&n_cases(21), 7, 10).unwrap();
        assert_eq!(s.precedent_portion.len(), 11);
        assert_eq!(s.evaluation_portion.len(), 10);

        assert!(matches!(split_and_batch(&n_cases(0), 1, 10), Err(CorpusError::EmptyCorpus)));
        assert!(matches!(split_and_batch(&n_cases(4), 1, 0), Err(CorpusError::InvalidBatchSize)));
    }

    proptest! {
        #[test]
        fn split_invariants(n in 1usize..120, seed in any::<u64>(), batch in 1usize..15) {
            let corpus = n_cases(n);
            let s = split_and_batch(&corpus, seed, batch).unwrap();
            let p: HashSet<_> = s.precedent_portion.iter().collect();
            let e: HashSet<_> = s.evaluation_portion.iter().collect();
            prop_assert!(p.is_disjoint(&e));
            prop_assert_eq!(p.len() + e.len(), n);
            prop_assert!(s.precedent_portion.len() - s.evaluation_portion.len() <= 1);
            let batched: Vec<_> = s.batches.iter().flat_map(|b| b.case_ids.iter()).collect();
            prop_assert_eq!(batched.len(), e.len());
            for (i, b) in s.batches.iter().enumerate() {
                prop_assert_eq!(b.index, i);
                if i + 1 < s.batches.len() {
                    prop_assert_eq!(b.case_ids.len(), batch);
                } else {
                    prop_assert!(!b.case_ids.is_empty() && b.case_ids.len() <= batch);
                }
            }
        }

        #[test]
        fn controversy_matches_brute_force(
            ratings in prop::collection::vec((0usize..3, 1u8..=5), 3..30)
        ) {
            let names = ["A", "B", "C"];
            let mut ratings: Vec<(String, u8)> =
                ratings.into_iter().map(|(g, r)| (names[g].to_string(), r)).collect();
            // every group gets at least one rating
            for (i, n) in names.iter().enumerate() {
                ratings.push((n.to_string(), (i as u8) + 1));
            }
            let refs: Vec<(&str, u8)> = ratings.iter().map(|(g, r)| (g.as_str(), *r)).collect();
            let c = case("x", &refs);
            let got = controversy_score(&c, &groups(&names)).unwrap();
            let ids: Vec<String> = names.iter().map(|s| s.to_string()).collect();
            let want = brute_controversy(&ratings, &ids);
            prop_assert!((got - want).abs() <= 1e-12);
        }

        #[test]
        fn select_controversial_is_order_invariant(seed in any::<u64>(), n in 1usize..6) {
            let gs = groups(&["A", "B"]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cases: Vec<Case> = (0..8)
                .map(|i| {
                    let a = (i % 5) as u8 + 1;
                    let b = ((i * 3) % 5) as u8 + 1;
                    case(&format!("c{i}"), &[("A", a), ("B", b), ("B", 3)])
                })
                .collect();
            let base = select_controversial(&Corpus::new(Domain::Toxicity, cases.clone()).unwrap(), n, &gs).unwrap();
            cases.shuffle(&mut rng);
            let shuffled = select_controversial(&Corpus::new(Domain::Toxicity, cases).unwrap(), n, &gs).unwrap();
            prop_assert_eq!(base.cases(), shuffled.cases());
        }
    }
}
