//! Two-sample Kolmogorov–Smirnov test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

fn sorted(v: &[f64], which: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidParameter(format!("KS test needs a non-empty {which} sample")));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter(format!("KS test {which} sample contains NaN")));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Largest absolute gap between the two empirical CDFs, with an asymptotic
/// p-value. The gap is found as the integer `|i·n2 − j·n1|` and divided by
/// `n1·n2` once, so the statistic is the correctly rounded rational.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let a = sorted(a, "first")?;
    let b = sorted(b, "second")?;
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut widest: u128 = 0;
    while i < n1 && j < n2 {
        let v = a[i].min(b[j]);
        while i < n1 && a[i] <= v {
            i += 1;
        }
        while j < n2 && b[j] <= v {
            j += 1;
        }
        widest = widest.max((i as u128 * n2 as u128).abs_diff(j as u128 * n1 as u128));
    }
    let statistic = widest as f64 / (n1 as u128 * n2 as u128) as f64;
    let effective = (n1 * n2) as f64 / (n1 + n2) as f64;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_survival(effective.sqrt() * statistic),
        n1,
        n2,
    })
}

/// `P(K > lambda)` for the limiting Kolmogorov distribution,
/// `2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        // The alternating series is ill-conditioned here and the value is 1
        // to well below f64 resolution.
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * 2.0 * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() <= 1e-12 * sum.abs() || term.abs() < 1e-300 {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    1.0
}
