use super::EvalError;
use crate::decision::{Decision, Domain};

/// Fleiss' kappa over a case-by-annotator matrix of category indices in
/// `0..n_categories`.
///
/// Fails with [`EvalError::UndefinedKappa`] when every label falls in one
/// category, where chance agreement is 1 and kappa is 0/0.
pub fn fleiss_kappa_indices(labels: &[Vec<usize>], n_categories: usize) -> Result<f64, EvalError> {
    if labels.len() < 2 {
        return Err(EvalError::TooFewCases(labels.len()));
    }
    let raters = labels[0].len();
    if raters < 2 {
        return Err(EvalError::TooFewAnnotators(raters));
    }
    if labels.iter().any(|row| row.len() != raters) {
        return Err(EvalError::RaggedMatrix);
    }
    let n_cases = labels.len();
    let mut totals = vec![0usize; n_categories];
    let mut observed = 0.0;
    let mut counts = vec![0usize; n_categories];
    for row in labels {
        counts.iter_mut().for_each(|c| *c = 0);
        for &label in row {
            if label >= n_categories {
                return Err(EvalError::CategoryOutOfRange(label));
            }
            counts[label] += 1;
            totals[label] += 1;
        }
        let agreeing: usize = counts.iter().map(|c| c * c).sum::<usize>() - raters;
        observed += agreeing as f64 / (raters * (raters - 1)) as f64;
    }
    let grand = n_cases * raters;
    if totals.contains(&grand) {
        return Err(EvalError::UndefinedKappa);
    }
    let observed = observed / n_cases as f64;
    let expected: f64 = totals
        .iter()
        .map(|&t| {
            let p = t as f64 / grand as f64;
            p * p
        })
        .sum();
    Ok((observed - expected) / (1.0 - expected))
}

/// Fleiss' kappa over the domain's category set (2 for moderation, 5 for
/// toxicity).
pub fn fleiss_kappa(labels: &[Vec<Decision>], domain: Domain) -> Result<f64, EvalError> {
    let indices = labels
        .iter()
        .map(|row| {
            row.iter()
                .map(|d| {
                    if domain.admits(*d) {
                        Ok(d.category_index())
                    } else {
                        Err(EvalError::VariantMismatch)
                    }
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    fleiss_kappa_indices(&indices, domain.categories().len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const K: Decision = Decision::KEEP;
    const R: Decision = Decision::REMOVE;

    /// Straight from the definitions with every sum written out over
    /// (case, rater pair) and (category) separately.
    fn brute_kappa(labels: &[Vec<usize>], q: usize) -> Option<f64> {
        let n = labels[0].len() as f64;
        let mut p_bar = 0.0;
        for row in labels {
            let mut agree_pairs = 0.0;
            for i in 0..row.len() {
                for j in 0..row.len() {
                    if i != j && row[i] == row[j] {
                        agree_pairs += 1.0;
                    }
                }
            }
            p_bar += agree_pairs / (n * (n - 1.0));
        }
        p_bar /= labels.len() as f64;
        let mut pe = 0.0;
        for c in 0..q {
            let mut cnt = 0.0;
            for row in labels {
                for &l in row {
                    if l == c {
                        cnt += 1.0;
                    }
                }
            }
            let p = cnt / (labels.len() as f64 * n);
            pe += p * p;
        }
        if (1.0 - pe).abs() < 1e-15 {
            None
        } else {
            Some((p_bar - pe) / (1.0 - pe))
        }
    }

    #[test]
    fn examples() {
        let perfect = vec![vec![K, K, K], vec![R, R, R]];
        assert_eq!(fleiss_kappa(&perfect, Domain::Mod).unwrap(), 1.0);

        let split = vec![vec![K, K, R], vec![R, R, K]];
        let k = fleiss_kappa(&split, Domain::Mod).unwrap();
        assert!((k + 1.0 / 3.0).abs() < 1e-12);

        let constant = vec![vec![K, K], vec![K, K]];
        assert!(matches!(fleiss_kappa(&constant, Domain::Mod), Err(EvalError::UndefinedKappa)));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(fleiss_kappa(&[vec![K, R]], Domain::Mod), Err(EvalError::TooFewCases(1))));
        assert!(matches!(fleiss_kappa(&[vec![K], vec![R]], Domain::Mod), Err(EvalError::TooFewAnnotators(1))));
        assert!(matches!(fleiss_kappa(&[vec![K, R], vec![R]], Domain::Mod), Err(EvalError::RaggedMatrix)));
        assert!(matches!(
            fleiss_kappa(&[vec![K, R], vec![R, Decision::Ordinal(2)]], Domain::Mod),
            Err(EvalError::VariantMismatch)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_brute_force(
            q in 2usize..=5,
            raters in 2usize..6,
            cases in 2usize..12,
            seed in prop::collection::vec(0usize..1000, 72),
        ) {
            let labels: Vec<Vec<usize>> = (0..cases)
                .map(|i| (0..raters).map(|j| seed[(i * raters + j) % seed.len()] % q).collect())
                .collect();
            match (fleiss_kappa_indices(&labels, q), brute_kappa(&labels, q)) {
                (Ok(a), Some(b)) => {
                    prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
                    prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a));
                }
                (Err(EvalError::UndefinedKappa), None) => {}
                (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
            }
        }
    }
}
