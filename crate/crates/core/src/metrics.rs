//! Evaluation metrics over uncertainty scores. Scores may be `+inf`, which
//! sorts after every finite value; NaN is rejected. Sorts are stable, so
//! tied scores keep input order.

use std::cmp::Ordering;

use crate::error::{NuqError, Result};

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(NuqError::input(format!("{name} contains NaN scores")));
    }
    Ok(())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(NuqError::input(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Indices of `scores` in ascending order, ties by index.
fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Probability that an out-of-distribution score exceeds an
/// in-distribution one, counting ties as one half (Mann-Whitney U).
pub fn roc_auc(in_scores: &[f64], out_scores: &[f64]) -> Result<f64> {
    if in_scores.is_empty() || out_scores.is_empty() {
        return Err(NuqError::input(
            "roc_auc needs nonempty in- and out-of-distribution scores",
        ));
    }
    check_scores("in_scores", in_scores)?;
    check_scores("out_scores", out_scores)?;
    let mut merged: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&s| (s, false))
        .chain(out_scores.iter().map(|&s| (s, true)))
        .collect();
    merged.sort_by(|a, b| a.0.total_cmp(&b.0));

    // twice the U statistic, kept integral: each out score earns 2 per
    // lower in score and 1 per tied in score
    let mut u2: u128 = 0;
    let mut in_below: u128 = 0;
    let mut i = 0;
    while i < merged.len() {
        let mut j = i;
        let (mut ins, mut outs) = (0u128, 0u128);
        while j < merged.len() && merged[j].0.total_cmp(&merged[i].0) == Ordering::Equal {
            if merged[j].1 {
                outs += 1;
            } else {
                ins += 1;
            }
            j += 1;
        }
        u2 += outs * (2 * in_below + ins);
        in_below += ins;
        i = j;
    }
    let pairs = in_scores.len() as f64 * out_scores.len() as f64;
    Ok((u2 as f64 / 2.0) / pairs)
}

/// Area under the risk-coverage curve as the unnormalized sum of prefix
/// risks: `sum_k (errors among the k most certain) / k`.
pub fn rcc_auc(uncertainties: &[f64], errors: &[bool]) -> Result<f64> {
    Ok(risk_coverage_curve(uncertainties, errors)?
        .iter()
        .map(|&(_, r)| r)
        .sum())
}

/// `(coverage k/n, risk among the k most certain)` for `k = 1..n`.
pub fn risk_coverage_curve(uncertainties: &[f64], errors: &[bool]) -> Result<Vec<(f64, f64)>> {
    check_lengths(uncertainties.len(), errors.len())?;
    if uncertainties.is_empty() {
        return Err(NuqError::input(
            "risk-coverage curve needs at least one point",
        ));
    }
    check_scores("uncertainties", uncertainties)?;
    let n = uncertainties.len() as f64;
    let mut wrong = 0usize;
    Ok(ascending_order(uncertainties)
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            wrong += usize::from(errors[i]);
            ((k + 1) as f64 / n, wrong as f64 / (k + 1) as f64)
        })
        .collect())
}

/// `(coverage k/n, accuracy among the k most certain)` for `k = 1..n`.
pub fn accuracy_rejection_curve(
    uncertainties: &[f64],
    correct: &[bool],
) -> Result<Vec<(f64, f64)>> {
    let errors: Vec<bool> = correct.iter().map(|c| !c).collect();
    Ok(risk_coverage_curve(uncertainties, &errors)?
        .into_iter()
        .map(|(cov, risk)| (cov, 1.0 - risk))
        .collect())
}

/// Number of out-of-distribution points among the `k` lowest scores of
/// the merged sample, `k = 1..n_in + n_out`. In-distribution scores come
/// first on ties.
pub fn ood_prefix_curve(in_scores: &[f64], out_scores: &[f64]) -> Result<Vec<usize>> {
    if in_scores.is_empty() || out_scores.is_empty() {
        return Err(NuqError::input("ood_prefix_curve needs nonempty inputs"));
    }
    check_scores("in_scores", in_scores)?;
    check_scores("out_scores", out_scores)?;
    let merged: Vec<f64> = in_scores.iter().chain(out_scores).copied().collect();
    let mut count = 0;
    Ok(ascending_order(&merged)
        .into_iter()
        .map(|i| {
            count += usize::from(i >= in_scores.len());
            count
        })
        .collect())
}

/// Fraction of positions where two prediction sequences agree.
pub fn agreement(preds_a: &[usize], preds_b: &[usize]) -> Result<f64> {
    check_lengths(preds_a.len(), preds_b.len())?;
    if preds_a.is_empty() {
        return Err(NuqError::input("agreement of empty sequences"));
    }
    let same = preds_a.iter().zip(preds_b).filter(|(a, b)| a == b).count();
    Ok(same as f64 / preds_a.len() as f64)
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let order = ascending_order(values);
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len()
            && values[order[j + 1]].total_cmp(&values[order[i]]) == Ordering::Equal
        {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(NuqError::input("spearman needs at least two points"));
    }
    check_scores("a", a)?;
    check_scores("b", b)?;
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(NuqError::Numerical(
            "spearman of a constant sequence".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}
