use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{aggregate_means, final_ranks_in_input_order, kendall_tau, means_over, TeamMeans, TeamResult};
use crate::error::{Error, Result};
use crate::metrics::percentile_linear;

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub teams: Vec<String>,
    /// Final rank of each team on the full case set.
    pub original_ranks: Vec<usize>,
    pub tau_mean: f64,
    pub tau_ci95: (f64, f64),
    /// `rank_frequency[t][r]`: share of samples in which team `t` placed
    /// `r + 1`.
    pub rank_frequency: Vec<Vec<f64>>,
    pub tau_samples: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

/// Case indices drawn with replacement for one bootstrap sample.
///
/// The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64(seed)`
/// with its stream set to `sample`. Each index is the high word of
/// `next_u64() * n_cases` (128-bit product), drawn sequentially. Samples are
/// therefore independent of evaluation order.
pub fn sample_case_indices(seed: u64, sample: u64, n_cases: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample);
    (0..n_cases)
        .map(|_| ((rng.next_u64() as u128 * n_cases as u128) >> 64) as usize)
        .collect()
}

/// Re-ranks the study on `n_samples` case resamples and measures agreement
/// with the original leaderboard.
pub fn bootstrap_stability(results: &[TeamResult], n_samples: usize, seed: u64) -> Result<StabilityReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("bootstrap needs at least one sample"));
    }
    let table = aggregate_means(results)?;
    let original = final_ranks_in_input_order(&table)?;
    let original_f: Vec<f64> = original.iter().map(|&r| r as f64).collect();
    let n_cases = results[0].per_case.len();
    let t = results.len();

    let mut counts = vec![vec![0usize; t]; t];
    let mut taus = Vec::with_capacity(n_samples);
    for b in 0..n_samples {
        let idx = sample_case_indices(seed, b as u64, n_cases);
        let resampled: Vec<TeamMeans> = results
            .iter()
            .map(|r| TeamMeans {
                team: r.team.clone(),
                means: means_over(idx.iter().map(|&i| &r.per_case[i])),
                runtime_s: r.mean_runtime_s,
            })
            .collect();
        let ranks = final_ranks_in_input_order(&resampled)?;
        for (team, &rank) in ranks.iter().enumerate() {
            counts[team][rank - 1] += 1;
        }
        let ranks_f: Vec<f64> = ranks.iter().map(|&r| r as f64).collect();
        taus.push(kendall_tau(&original_f, &ranks_f)?);
    }

    let tau_mean = taus.iter().sum::<f64>() / n_samples as f64;
    let mut sorted = taus.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let ci = (percentile_linear(&sorted, 2.5), percentile_linear(&sorted, 97.5));
    Ok(StabilityReport {
        teams: results.iter().map(|r| r.team.clone()).collect(),
        original_ranks: original,
        tau_mean,
        tau_ci95: ci,
        rank_frequency: counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / n_samples as f64).collect())
            .collect(),
        tau_samples: taus,
        n_samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::CaseMetrics;
    use alloc::string::ToString;

    fn case(iou: f64, dist: f64) -> CaseMetrics {
        CaseMetrics {
            iou_f: iou,
            hd95_f: dist,
            assd_f: dist / 4.0,
            iou_a: iou,
            hd95_a: dist,
            assd_a: dist / 4.0,
            fp_count: 0,
            runtime_s: None,
        }
    }

    #[test]
    fn indices_are_in_range_and_reproducible() {
        let a = sample_case_indices(42, 3, 30);
        assert_eq!(a, sample_case_indices(42, 3, 30));
        assert_ne!(a, sample_case_indices(42, 4, 30));
        assert!(a.iter().all(|&i| i < 30));
    }

    #[test]
    fn single_case_is_perfectly_stable() {
        let results: Vec<TeamResult> = (0..3)
            .map(|t| TeamResult {
                team: alloc::format!("t{t}"),
                per_case: vec![case(0.5 + t as f64 * 0.1, 5.0 - t as f64)],
                mean_runtime_s: 1.0,
                case_ids: vec![],
            })
            .collect();
        let r = bootstrap_stability(&results, 50, 1).unwrap();
        assert_eq!(r.tau_mean, 1.0);
        assert_eq!(r.tau_ci95, (1.0, 1.0));
    }

    #[test]
    fn rows_sum_to_one() {
        let results: Vec<TeamResult> = (0..4)
            .map(|t| TeamResult {
                team: t.to_string(),
                per_case: (0..9).map(|c| case(0.5 + ((c * 7 + t * 3) % 5) as f64 * 0.05, 3.0)).collect(),
                mean_runtime_s: t as f64,
                case_ids: vec![],
            })
            .collect();
        let r = bootstrap_stability(&results, 200, 9).unwrap();
        for row in &r.rank_frequency {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(r.tau_samples.iter().all(|t| (-1.0..=1.0).contains(t)));
        assert_eq!(bootstrap_stability(&results, 0, 9).unwrap_err(), Error::InvalidParameter("bootstrap needs at least one sample"));
    }
}
