//! Exact top-k retrieval of precedent cases by cosine similarity.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Case, Corpus};
use crate::decision::Decision;
use crate::embedding::{cosine, EmbeddingError, EmbeddingVector};
use crate::synthesis::PrecedentSelection;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("precedent set is empty")]
    EmptyIndex,
    #[error("no embedding for case `{0}`")]
    MissingVector(String),
    #[error("case `{case_id}` has dim {found}, index dim is {expected}")]
    DimensionMismatch {
        case_id: String,
        expected: usize,
        found: usize,
    },
    #[error("case `{case_id}` embedded with `{found}`, index uses `{expected}`")]
    ModelMismatch {
        case_id: String,
        expected: String,
        found: String,
    },
    #[error("window size must be at least 1")]
    InvalidK,
    #[error("window {k} exceeds the retrieved window {k_max}")]
    WindowTooLarge { k: usize, k_max: usize },
    #[error("similarity for `{case_id}`: {source}")]
    Similarity {
        case_id: String,
        source: EmbeddingError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedCase {
    pub case_id: String,
    pub similarity: f64,
    /// 1-based.
    pub rank: usize,
    pub gold: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub judged_case_id: String,
    pub k: usize,
    pub items: Vec<RetrievedCase>,
}

impl RetrievalResult {
    /// The first `k` items, as if retrieval had been run with window `k`.
    pub fn truncate(&self, k: usize) -> Result<RetrievalResult, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if k > self.k {
            return Err(RetrievalError::WindowTooLarge { k, k_max: self.k });
        }
        Ok(RetrievalResult {
            judged_case_id: self.judged_case_id.clone(),
            k,
            items: self.items.iter().take(k).cloned().collect(),
        })
    }

    pub fn by_rank(&self, rank: usize) -> Option<&RetrievedCase> {
        rank.checked_sub(1).and_then(|i| self.items.get(i))
    }
}

/// Descending similarity, then ascending case id.
pub fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

#[derive(Debug, Clone)]
struct IndexEntry {
    case_id: String,
    gold: Decision,
    values: Vec<f64>,
}

/// Immutable exact-search index over a precedent portion.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    model_id: String,
    dim: usize,
    entries: Vec<IndexEntry>,
}

pub fn build_index(
    precedents: &Corpus,
    vectors: &HashMap<String, EmbeddingVector>,
) -> Result<RetrievalIndex, RetrievalError> {
    let first = precedents.cases().first().ok_or(RetrievalError::EmptyIndex)?;
    let reference = vectors
        .get(&first.id)
        .ok_or_else(|| RetrievalError::MissingVector(first.id.clone()))?;
    let (model_id, dim) = (reference.model_id.clone(), reference.dim());
    let entries = precedents
        .cases()
        .iter()
        .map(|case| {
            let v = vectors
                .get(&case.id)
                .ok_or_else(|| RetrievalError::MissingVector(case.id.clone()))?;
            if v.dim() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    case_id: case.id.clone(),
                    expected: dim,
                    found: v.dim(),
                });
            }
            if v.model_id != model_id {
                return Err(RetrievalError::ModelMismatch {
                    case_id: case.id.clone(),
                    expected: model_id.clone(),
                    found: v.model_id.clone(),
                });
            }
            Ok(IndexEntry {
                case_id: case.id.clone(),
                gold: case.gold,
                values: v.values.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RetrievalIndex {
        model_id,
        dim,
        entries,
    })
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Top-`k` precedents for `judged_id` given its vector. The judged case
    /// itself is skipped by id if it happens to be in the index.
    pub fn retrieve(
        &self,
        judged_id: &str,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<RetrievalResult, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if query.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                case_id: judged_id.to_string(),
                expected: self.dim,
                found: query.dim(),
            });
        }
        let mut scored = self
            .entries
            .iter()
            .filter(|e| e.case_id != judged_id)
            .map(|e| {
                cosine(&query.values, &e.values)
                    .map(|s| (s, e))
                    .map_err(|source| RetrievalError::Similarity {
                        case_id: e.case_id.clone(),
                        source,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        scored.sort_by(|a, b| rank_order((a.0, &a.1.case_id), (b.0, &b.1.case_id)));
        let items = scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (similarity, e))| RetrievedCase {
                case_id: e.case_id.clone(),
                similarity,
                rank: i + 1,
                gold: e.gold,
            })
            .collect();
        Ok(RetrievalResult {
            judged_case_id: judged_id.to_string(),
            k,
            items,
        })
    }

    pub fn retrieve_case(
        &self,
        judged: &Case,
        vectors: &HashMap<String, EmbeddingVector>,
        k: usize,
    ) -> Result<RetrievalResult, RetrievalError> {
        let query = vectors
            .get(&judged.id)
            .ok_or_else(|| RetrievalError::MissingVector(judged.id.clone()))?;
        self.retrieve(&judged.id, query, k)
    }
}

/// Drops verdicts outside the first `k` ranks, simulating a smaller
/// retrieval window from a selection collected over `result`'s window.
pub fn restrict_window(
    selection: &PrecedentSelection,
    result: &RetrievalResult,
    k: usize,
) -> Result<PrecedentSelection, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if k > result.k {
        return Err(RetrievalError::WindowTooLarge { k, k_max: result.k });
    }
    let mut restricted = selection.clone();
    restricted.verdicts.retain(|&rank, _| rank <= k);
    Ok(restricted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Domain;
    use crate::synthesis::SelectionVerdict;
    use proptest::prelude::*;

    fn corpus(n: usize) -> Corpus {
        let cases = (0..n)
            .map(|i| Case {
                id: format!("p{i}"),
                text: format!("precedent {i}"),
                group_id: "g".into(),
                gold: if i % 2 == 0 { Decision::KEEP } else { Decision::REMOVE },
                raw_ratings: None,
            })
            .collect();
        Corpus::new(Domain::Mod, cases).unwrap()
    }

    fn vec2(x: f64, y: f64) -> EmbeddingVector {
        EmbeddingVector::new("m", vec![x, y]).unwrap()
    }

    fn angle_vectors(n: usize) -> HashMap<String, EmbeddingVector> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 0.1;
                (format!("p{i}"), vec2(a.cos(), a.sin()))
            })
            .collect()
    }

    #[test]
    fn build_index_examples() {
        let idx = build_index(&corpus(100), &angle_vectors(100)).unwrap();
        assert_eq!(idx.len(), 100);

        let mut vectors = angle_vectors(5);
        vectors.remove("p3");
        assert!(matches!(build_index(&corpus(5), &vectors), Err(RetrievalError::MissingVector(id)) if id == "p3"));

        assert!(matches!(build_index(&corpus(0), &HashMap::new()), Err(RetrievalError::EmptyIndex)));

        let mut vectors = angle_vectors(3);
        vectors.insert("p2".into(), EmbeddingVector::new("m", vec![1.0, 0.0, 0.0]).unwrap());
        assert!(matches!(build_index(&corpus(3), &vectors), Err(RetrievalError::DimensionMismatch { .. })));
    }

    #[test]
    fn retrieve_examples() {
        let idx = build_index(&corpus(10), &angle_vectors(10)).unwrap();
        let all = idx.retrieve("q", &vec2(1.0, 0.0), 10).unwrap();
        assert_eq!(all.items.len(), 10);
        let ids: Vec<_> = all.items.iter().map(|i| i.case_id.as_str()).collect();
        assert_eq!(ids, ["p0", "p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "p9"]);
        assert_eq!(all.items[0].similarity, 1.0);
        assert_eq!(all.items.iter().map(|i| i.rank).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());

        let p4 = angle_vectors(10)["p4"].clone();
        let r = idx.retrieve("q", &p4, 3).unwrap();
        assert_eq!(r.items[0].case_id, "p4");
        assert!((r.items[0].similarity - 1.0).abs() < 1e-15);

        // judged case excluded by id even though it is in the index
        let r = idx.retrieve("p4", &p4, 3).unwrap();
        assert!(r.items.iter().all(|i| i.case_id != "p4"));

        // k beyond index size returns everything else
        let r = idx.retrieve("q", &vec2(0.0, 1.0), 50).unwrap();
        assert_eq!(r.items.len(), 10);
        assert_eq!(r.k, 50);
    }

    #[test]
    fn retrieve_orders_by_similarity_then_id() {
        let cases = corpus(3);
        // similarities to (1, 0): 0.9, 0.5, 0.1
        let vectors: HashMap<_, _> = [("p0", 0.1), ("p1", 0.9), ("p2", 0.5)]
            .into_iter()
            .map(|(id, c)| (id.to_string(), vec2(c, (1.0 - c * c).sqrt())))
            .collect();
        let idx = build_index(&cases, &vectors).unwrap();
        let r = idx.retrieve("q", &vec2(1.0, 0.0), 2).unwrap();
        let ids: Vec<_> = r.items.iter().map(|i| i.case_id.as_str()).collect();
        assert_eq!(ids, ["p1", "p2"]);

        let tied: HashMap<_, _> = ["p2", "p0", "p1"].iter().map(|id| (id.to_string(), vec2(1.0, 1.0))).collect();
        let idx = build_index(&cases, &tied).unwrap();
        let r = idx.retrieve("q", &vec2(1.0, 0.0), 3).unwrap();
        let ids: Vec<_> = r.items.iter().map(|i| i.case_id.as_str()).collect();
        assert_eq!(ids, ["p0", "p1", "p2"]);
    }

    fn selection(ranks: &[usize]) -> PrecedentSelection {
        PrecedentSelection {
            judged_case_id: "q".into(),
            agent_id: "a".into(),
            verdicts: ranks.iter().map(|&r| (r, SelectionVerdict::Precedent)).collect(),
            final_unconstrained: None,
        }
    }

    fn result_k(k: usize) -> RetrievalResult {
        RetrievalResult {
            judged_case_id: "q".into(),
            k,
            items: (1..=k)
                .map(|r| RetrievedCase {
                    case_id: format!("p{r}"),
                    similarity: 1.0 - r as f64 / 100.0,
                    rank: r,
                    gold: Decision::KEEP,
                })
                .collect(),
        }
    }

    #[test]
    fn restrict_window_examples() {
        let r = result_k(15);
        let s = selection(&[1, 4, 12]);
        assert_eq!(restrict_window(&s, &r, 15).unwrap(), s);
        let five = restrict_window(&s, &r, 5).unwrap();
        assert_eq!(five.verdicts.keys().copied().collect::<Vec<_>>(), [1, 4]);
        let s = selection(&[7, 9]);
        assert!(restrict_window(&s, &r, 5).unwrap().verdicts.is_empty());
        assert!(matches!(restrict_window(&s, &r, 16), Err(RetrievalError::WindowTooLarge { k: 16, k_max: 15 })));
    }

    proptest! {
        #[test]
        fn restrict_window_composes(ranks in prop::collection::btree_set(1usize..=15, 0..15), k1 in 1usize..=15, k2 in 1usize..=15) {
            let r = result_k(15);
            let s = selection(&ranks.into_iter().collect::<Vec<_>>());
            let once = restrict_window(&s, &r, k1.min(k2)).unwrap();
            let r1 = r.truncate(k1).unwrap();
            let twice = restrict_window(&restrict_window(&s, &r, k1).unwrap(), &r1, k2.min(k1)).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn retrieval_matches_full_sort_and_nests(
            coords in prop::collection::vec((-5i32..5, -5i32..5, -5i32..5), 1..40),
            q in (-5i32..5, -5i32..5, -5i32..5),
            k in 1usize..20,
        ) {
            let coords: Vec<_> = coords.into_iter().filter(|c| *c != (0, 0, 0)).collect();
            prop_assume!(!coords.is_empty() && q != (0, 0, 0));
            let to_v = |c: (i32, i32, i32)| EmbeddingVector::new("m", vec![c.0 as f64, c.1 as f64, c.2 as f64]).unwrap();
            let cases = corpus(coords.len());
            let vectors: HashMap<_, _> = coords.iter().enumerate().map(|(i, c)| (format!("p{i}"), to_v(*c))).collect();
            let idx = build_index(&cases, &vectors).unwrap();
            let qv = to_v(q);

            // brute force: every precedent, full sort
            let mut all: Vec<(f64, String)> = vectors.iter().map(|(id, v)| (cosine(&qv.values, &v.values).unwrap(), id.clone())).collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<String> = all.iter().take(k).map(|x| x.1.clone()).collect();

            let got = idx.retrieve("q", &qv, k).unwrap();
            let got_ids: Vec<String> = got.items.iter().map(|i| i.case_id.clone()).collect();
            prop_assert_eq!(&got_ids, &want);
            let bigger = idx.retrieve("q", &qv, k + 3).unwrap();
            prop_assert_eq!(&bigger.items[..got.items.len()], &got.items[..]);
        }
    }
}
