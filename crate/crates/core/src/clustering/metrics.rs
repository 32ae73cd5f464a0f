//! Homogeneity of a clustering against ground-truth labels.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn entropy_of_counts<'a>(counts: impl Iterator<Item = &'a usize>, total: f64) -> f64 {
    counts
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// `1 - H(C|K) / H(C)` with natural-log entropies, where C are the truth
/// classes and K the predicted clusters. Defined as 1 when the truth has a
/// single class.
pub fn homogeneity(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "label lists differ in length ({} vs {})",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("empty label lists".into()));
    }
    let n = truth.len() as f64;

    let mut class_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cluster_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&c, &k) in truth.iter().zip(predicted) {
        *class_counts.entry(c).or_default() += 1;
        *cluster_counts.entry(k).or_default() += 1;
        *joint.entry((k, c)).or_default() += 1;
    }

    let h_c = entropy_of_counts(class_counts.values(), n);
    if h_c == 0.0 {
        return Ok(1.0);
    }
    let h_c_given_k: f64 = joint
        .iter()
        .map(|(&(k, _), &n_ck)| {
            let n_k = cluster_counts[&k] as f64;
            let n_ck = n_ck as f64;
            -(n_ck / n) * (n_ck / n_k).ln()
        })
        .sum();
    Ok((1.0 - h_c_given_k / h_c).clamp(0.0, 1.0))
}

/// `sum(w_i * s_i) / sum(w_i)`.
pub fn weighted_mean(scores: &[f64], weights: &[f64]) -> Result<f64> {
    if scores.len() != weights.len() {
        return Err(Error::InvalidInput("scores and weights differ in length".into()));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidInput("all weights are zero".into()));
    }
    Ok(scores.iter().zip(weights).map(|(s, w)| s * w).sum::<f64>() / total)
}
