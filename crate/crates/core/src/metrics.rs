//! Evaluation metrics on a held-out truth set. Regression errors are measured
//! on the exponentiated scale; concordance uses the one-sided pair count.

use crate::error::{invalid, Error, Result};

fn check(pred: &[f64], truth: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), found: pred.len() });
    }
    if pred.len() < min_len {
        return Err(invalid("too few predictions"));
    }
    Ok(())
}

/// `max_i |exp(pred_i) − exp(truth_i)|`.
pub fn smaxae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth, 1)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| libm::fabs(libm::exp(p) - libm::exp(t)))
        .fold(0.0, f64::max))
}

/// `mean_i (exp(pred_i) − exp(truth_i))²`.
pub fn smsqe(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth, 1)?;
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| {
            let d = libm::exp(p) - libm::exp(t);
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `(n_C − n_D) / (n(n−1)/2)` over ordered pairs with `truth_i > truth_j`:
/// concordant when `pred_i > pred_j`, discordant otherwise.
pub fn skdt(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth, 2)?;
    let n = pred.len();
    let mut score: i64 = 0;
    for i in 0..n {
        for j in 0..n {
            if truth[i] > truth[j] {
                score += if pred[i] > pred[j] { 1 } else { -1 };
            }
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    /// `None` when the truth set has no positives.
    pub sensitivity: Option<f64>,
    /// `None` when the truth set has no negatives.
    pub specificity: Option<f64>,
}

/// Survival status at `s`: a case is positive when `exp(φ) > s` and is
/// predicted positive when `pred > 0`.
pub fn classification_metrics(pred: &[f64], truth_phi: &[f64], s: f64) -> Result<ClassificationMetrics> {
    check(pred, truth_phi, 1)?;
    let (mut pos, mut tp, mut neg, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &phi) in pred.iter().zip(truth_phi) {
        if libm::exp(phi) > s {
            pos += 1;
            tp += usize::from(p > 0.0);
        } else {
            neg += 1;
            tn += usize::from(p <= 0.0);
        }
    }
    Ok(ClassificationMetrics {
        sensitivity: (pos > 0).then(|| tp as f64 / pos as f64),
        specificity: (neg > 0).then(|| tn as f64 / neg as f64),
    })
}
