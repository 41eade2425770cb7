//! Accuracy, standard error and the paired t-test.
//!
//! Student-t tail probabilities go through the regularized incomplete beta
//! function `I_x(a, b)`, evaluated with the modified Lentz continued
//! fraction and the symmetry `I_x(a, b) = 1 - I_{1-x}(b, a)` to stay in the
//! fast-converging region. `ln Γ` uses the Lanczos approximation (g = 7,
//! n = 9), accurate to roughly 1e-15 relative for positive arguments.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::decision::Decision;

/// Mean and standard error (sample standard deviation over sqrt n) of
/// per-case scores. A single score has zero standard error.
pub fn mean_and_se(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    if scores.len() < 2 {
        return (mean, 0.0);
    }
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Exact-match accuracy and its standard error.
pub fn accuracy(decisions: &[Decision], gold: &[Decision]) -> Result<(f64, f64), EvalError> {
    if decisions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            left: decisions.len(),
            right: gold.len(),
        });
    }
    if decisions.is_empty() {
        return Err(EvalError::Empty);
    }
    let scores = decisions
        .iter()
        .zip(gold)
        .map(|(d, g)| {
            if d.domain() != g.domain() {
                Err(EvalError::VariantMismatch)
            } else {
                Ok(if d == g { 1.0 } else { 0.0 })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean_and_se(&scores))
}

/// Share of ordinal decisions within one level of gold. Not an exact-match
/// metric; reported alongside accuracy for the 5-point task only.
pub fn within_one(decision: Decision, gold: Decision) -> bool {
    match (decision, gold) {
        (Decision::Ordinal(a), Decision::Ordinal(b)) => a.abs_diff(b) <= 1,
        _ => decision == gold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Two-sided paired t-test on `a[i] - b[i]`.
///
/// All-zero differences give `t = 0, p = 1`. Constant non-zero differences
/// give an infinite `t` and `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewPairs(a.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = diffs.len() - 1;
    if diffs.iter().all(|d| *d == 0.0) {
        return Ok(TTest { t: 0.0, p: 1.0, df });
    }
    let (mean, se) = mean_and_se(&diffs);
    if se == 0.0 {
        return Ok(TTest {
            t: mean.signum() * f64::INFINITY,
            p: 0.0,
            df,
        });
    }
    let t = mean / se;
    Ok(TTest {
        t,
        p: students_t_two_sided(t, df as f64),
        df,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn students_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)` for `a, b > 0` and `x` in [0, 1].
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
