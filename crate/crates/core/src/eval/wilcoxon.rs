//! One-sided Wilcoxon signed-rank test for paired samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_LIMIT: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `x` tends to exceed `y`.
    Greater,
    /// `x` tends to fall below `y`.
    Less,
}

/// Average ranks of `|diffs|` (1-based), doubled so tied ranks stay integral.
pub fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0; diffs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        // Ranks start+1 ..= end average to (start + 1 + end) / 2.
        let doubled = (start + 1 + end) as u64;
        for &o in &order[start..end] {
            ranks[o] = doubled;
        }
        start = end;
    }
    ranks
}

/// Non-zero paired differences `x - y`.
pub fn nonzero_differences(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("Wilcoxon test input contains NaN".into()));
    }
    Ok(x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect())
}

/// Number of sign assignments producing each doubled positive-rank sum.
fn sign_pattern_counts(ranks: &[u64]) -> Vec<u64> {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// p-value of the one-sided signed-rank test of `x` against `y`.
///
/// Zero differences are dropped; if none remain the p-value is 1. Up to
/// [`EXACT_LIMIT`] differences the null distribution is enumerated exactly,
/// beyond that a tie-corrected normal approximation with continuity
/// correction is used.
pub fn wilcoxon_one_sided(x: &[f64], y: &[f64], alternative: Alternative) -> Result<f64> {
    let diffs = nonzero_differences(x, y)?;
    let n = diffs.len();
    if n == 0 {
        return Ok(1.0);
    }
    let ranks = doubled_ranks(&diffs);
    let w2: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_LIMIT {
        let counts = sign_pattern_counts(&ranks);
        let tail: u64 = match alternative {
            Alternative::Greater => counts[w2 as usize..].iter().sum(),
            Alternative::Less => counts[..=w2 as usize].iter().sum(),
        };
        return Ok(tail as f64 / (1u64 << n) as f64);
    }

    let w = w2 as f64 / 2.0;
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    // Tie correction: subtract Σ(t³ - t)/48 over tie groups.
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let normal = Normal::standard();
    Ok(match alternative {
        Alternative::Greater => normal.sf((w - mean - 0.5) / sd),
        Alternative::Less => normal.cdf((w - mean + 0.5) / sd),
    })
}
