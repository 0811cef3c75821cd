//! Exact AUROC via the Wilcoxon-Mann-Whitney rank statistic.
//!
//! Ties between a positive and a negative score count one half, the standard
//! unbiased WMW convention. `auroc` runs in O(n log n); `auroc_bruteforce`
//! enumerates every positive-negative pair and exists as an independent
//! oracle for tests.

use crate::{Error, Result};

/// A model output paired with its binary class label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    /// Exactly +1 or -1.
    pub label: i8,
}

impl ScoredSample {
    pub fn new(score: f64, label: i8) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::NonFiniteScore);
        }
        if label != 1 && label != -1 {
            return Err(Error::BadParams(format!("label must be +1 or -1, got {label}")));
        }
        Ok(Self { score, label })
    }
}

fn validate(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    let mut n_pos = 0;
    let mut n_neg = 0;
    for s in samples {
        if !s.score.is_finite() {
            return Err(Error::NonFiniteScore);
        }
        if s.label == 1 {
            n_pos += 1;
        } else {
            n_neg += 1;
        }
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::EmptyClass);
    }
    Ok((n_pos, n_neg))
}

/// AUROC of the given scored samples, ties counted one half.
///
/// Sorts once and uses midranks: with R the rank sum of the positives,
/// AUROC = (R - n_pos(n_pos+1)/2) / (n_pos * n_neg).
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    let (n_pos, n_neg) = validate(samples)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].score.total_cmp(&samples[b].score));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && samples[order[j]].score == samples[order[i]].score {
            j += 1;
        }
        // ranks i+1..=j share the midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if samples[idx].label == 1 {
                pos_rank_sum += midrank;
            }
        }
        i = j;
    }
    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Ok((pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Quadratic reference: loops over all positive-negative pairs.
pub fn auroc_bruteforce(samples: &[ScoredSample]) -> Result<f64> {
    let (n_pos, n_neg) = validate(samples)?;
    let mut wins = 0.0;
    for p in samples.iter().filter(|s| s.label == 1) {
        for n in samples.iter().filter(|s| s.label == -1) {
            if p.score > n.score {
                wins += 1.0;
            } else if p.score == n.score {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Convenience wrapper over separate score slices.
pub fn auroc_from_scores(pos: &[f64], neg: &[f64]) -> Result<f64> {
    let mut samples = Vec::with_capacity(pos.len() + neg.len());
    for &s in pos {
        samples.push(ScoredSample::new(s, 1)?);
    }
    for &s in neg {
        samples.push(ScoredSample::new(s, -1)?);
    }
    auroc(&samples)
}
