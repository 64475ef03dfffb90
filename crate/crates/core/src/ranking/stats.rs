//! Rank correlation and paired signed-rank testing.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of non-zero differences evaluated with the exact null
/// distribution; larger samples use the normal approximation.
pub const EXACT_WILCOXON_MAX_N: usize = 25;

/// Kendall's τ-b between two rankings of the same items.
///
/// Without ties this is `(concordant - discordant) / (n(n-1)/2)`.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidParameter("kendall tau needs at least two items"));
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tied_a, mut tied_b) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = (a[i] - a[j]).partial_cmp(&0.0);
            let db = (b[i] - b[j]).partial_cmp(&0.0);
            use core::cmp::Ordering::Equal;
            match (da, db) {
                (Some(Equal), Some(Equal)) => {}
                (Some(Equal), _) => tied_a += 1,
                (_, Some(Equal)) => tied_b += 1,
                (x, y) if x == y => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    // Pairs tied in both are excluded from both marginal counts.
    let both = pairs - concordant - discordant - tied_a - tied_b;
    let n_a = (pairs - tied_a - both) as f64;
    let n_b = (pairs - tied_b - both) as f64;
    let denom = libm::sqrt(n_a * n_b);
    if denom == 0.0 {
        return Err(Error::InvalidParameter("kendall tau undefined for a constant ranking"));
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// Outcome of a one-sided Wilcoxon signed-rank test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    /// Number of non-zero differences.
    pub n: usize,
    /// `P(W+ >= statistic)` under the null.
    pub p_value: f64,
    pub exact: bool,
}

/// Average ranks of `|d|` doubled, so tied ranks stay integral.
pub(crate) fn doubled_abs_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| libm::fabs(diffs[i]).total_cmp(&libm::fabs(diffs[j])));
    let mut ranks = vec![0u64; diffs.len()];
    let mut start = 0;
    while start < order.len() {
        let value = libm::fabs(diffs[order[start]]);
        let mut end = start + 1;
        while end < order.len() && libm::fabs(diffs[order[end]]) == value {
            end += 1;
        }
        // Ranks start+1 ..= end share (start+1+end)/2; doubled: start+1+end.
        let doubled = (start + 1 + end) as u64;
        for &k in &order[start..end] {
            ranks[k] = doubled;
        }
        start = end;
    }
    ranks
}

fn standard_normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}

/// Tests H1: the median of `x - y` is positive.
///
/// Zero differences are dropped and tied magnitudes share average ranks. Up
/// to [`EXACT_WILCOXON_MAX_N`] non-zero pairs the p-value is read from the
/// exact permutation distribution of the signed-rank statistic; above that a
/// continuity-corrected normal approximation with tie-corrected variance is
/// used.
pub fn wilcoxon_one_sided(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::DegenerateTest);
    }
    if n < 5 {
        return Err(Error::TooFewSamples(n));
    }
    let ranks = doubled_abs_ranks(&diffs);
    let w2: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let statistic = w2 as f64 / 2.0;

    if n <= EXACT_WILCOXON_MAX_N {
        // Null distribution of the doubled statistic: each rank enters with
        // a positive sign independently with probability 1/2.
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0.0f64; total as usize + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                let c = counts[s];
                if c != 0.0 {
                    counts[s + r] += c;
                }
            }
            reach += r;
        }
        let upper: f64 = counts[w2 as usize..].iter().sum();
        let p_value = upper / libm::pow(2.0, n as f64);
        return Ok(WilcoxonResult { statistic, n, p_value: p_value.min(1.0), exact: true });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (statistic - mean - 0.5) / libm::sqrt(var);
    Ok(WilcoxonResult { statistic, n, p_value: standard_normal_sf(z), exact: false })
}
