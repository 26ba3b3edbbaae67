// SPDX-License-Identifier: Apache-2.0

//! Utility and group-fairness metrics. Class 1 is the positive class for DP
//! and EO; with more than two classes they are computed one-vs-rest for
//! class 1.

use crate::error::{Error, Result};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

/// `|pos0/tot0 - pos1/tot1|` over a common denominator, so the result is the
/// correctly rounded value of the exact rational.
fn rate_gap(pos: [usize; 2], tot: [usize; 2]) -> f64 {
    let a = pos[0] as u128 * tot[1] as u128;
    let b = pos[1] as u128 * tot[0] as u128;
    a.abs_diff(b) as f64 / (tot[0] as u128 * tot[1] as u128) as f64
}

/// Positive-prediction rate gap between the two sensitive groups:
/// `|P(pred = 1 | s = 0) - P(pred = 1 | s = 1)|`.
pub fn metric_dp(preds: &[usize], sensitive: &[u8]) -> Result<f64> {
    check_len(preds.len(), sensitive.len())?;
    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for (&y, &s) in preds.iter().zip(sensitive) {
        let g = usize::from(s != 0);
        tot[g] += 1;
        pos[g] += usize::from(y == 1);
    }
    if tot.contains(&0) {
        return Err(Error::EmptyGroup("a sensitive group has no nodes".into()));
    }
    Ok(rate_gap(pos, tot))
}

/// True-positive rate gap between the two sensitive groups:
/// `|P(pred = 1 | y = 1, s = 0) - P(pred = 1 | y = 1, s = 1)|`.
pub fn metric_eo(preds: &[usize], labels: &[usize], sensitive: &[u8]) -> Result<f64> {
    check_len(preds.len(), labels.len())?;
    check_len(preds.len(), sensitive.len())?;
    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for ((&p, &y), &s) in preds.iter().zip(labels).zip(sensitive) {
        if y != 1 {
            continue;
        }
        let g = usize::from(s != 0);
        tot[g] += 1;
        pos[g] += usize::from(p == 1);
    }
    if tot.contains(&0) {
        return Err(Error::EmptyGroup(
            "a sensitive group has no positive-label nodes".into(),
        ));
    }
    Ok(rate_gap(pos, tot))
}

/// Accuracy and macro-F1. Macro-F1 averages per-class F1 over every class
/// that appears in either `preds` or `labels`; a class with zero precision
/// and recall scores 0.
pub fn metric_acc_f1(preds: &[usize], labels: &[usize]) -> Result<(f64, f64)> {
    check_len(preds.len(), labels.len())?;
    if preds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let classes = preds.iter().chain(labels).max().copied().unwrap_or(0) + 1;
    let mut tp = vec![0usize; classes];
    let mut pred_n = vec![0usize; classes];
    let mut true_n = vec![0usize; classes];
    for (&p, &y) in preds.iter().zip(labels) {
        pred_n[p] += 1;
        true_n[y] += 1;
        if p == y {
            tp[p] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    // F1_c = 2TP / (|pred = c| + |y = c|), which is 0 when TP = 0.
    let terms: Vec<(u128, u128)> = (0..classes)
        .filter(|&c| pred_n[c] + true_n[c] > 0)
        .map(|c| (2 * tp[c] as u128, (pred_n[c] + true_n[c]) as u128))
        .collect();
    let present = terms.len() as u128;
    let macro_f1 = match exact_mean(&terms, present) {
        Some(v) => v,
        None => terms.iter().map(|&(a, b)| a as f64 / b as f64).sum::<f64>() / present as f64,
    };
    Ok((correct as f64 / preds.len() as f64, macro_f1))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of fractions evaluated exactly and rounded once; `None` on overflow.
fn exact_mean(terms: &[(u128, u128)], count: u128) -> Option<f64> {
    let (mut num, mut den) = (0u128, 1u128);
    for &(a, b) in terms {
        let g = gcd(den, b);
        let l = den / g * b;
        num = num.checked_mul(l / den)?.checked_add(a.checked_mul(l / b)?)?;
        den = l;
        let r = gcd(num, den);
        if r > 1 {
            num /= r;
            den /= r;
        }
    }
    let den = den.checked_mul(count)?;
    // Both sides must be exact in f64 for a single rounding.
    const EXACT: u128 = 1 << 53;
    (num <= EXACT && den <= EXACT).then(|| num as f64 / den as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dp_cases() {
        assert_eq!(metric_dp(&[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(metric_dp(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert_eq!(metric_dp(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert!(metric_dp(&[1, 0], &[1, 1]).is_err());
    }

    #[test]
    fn eo_cases() {
        assert_eq!(metric_eo(&[0, 0, 0, 0], &[1, 1, 1, 0], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert_eq!(metric_eo(&[1, 0, 1, 0], &[1, 1, 1, 0], &[1, 1, 0, 0]).unwrap(), 0.5);
        assert_eq!(metric_eo(&[1, 1, 1, 0], &[1, 1, 1, 0], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert!(metric_eo(&[1, 0], &[1, 0], &[1, 0]).is_err());
    }

    #[test]
    fn acc_f1_cases() {
        assert_eq!(metric_acc_f1(&[0, 1, 2], &[0, 1, 2]).unwrap(), (1.0, 1.0));
        assert_eq!(metric_acc_f1(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), (0.5, 0.5));
        let (acc, f1) = metric_acc_f1(&[0, 0, 0, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!(acc, 0.5);
        assert!((f1 - 1.0 / 3.0).abs() < 1e-15);
        assert!(metric_acc_f1(&[], &[]).is_err());
    }
}
