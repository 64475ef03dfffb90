//! Leaderboards, bootstrap rank stability and pairwise significance.
//!
//! Ranking follows the challenge protocol: average each metric over cases,
//! rank teams per metric (1 = best; tied means share the smaller rank),
//! order teams by their mean rank across the six metrics, and break mean-rank
//! ties by the faster container runtime. Teams still tied after that are
//! ordered by name and flagged.

mod bootstrap;
mod stats;

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{CaseMetrics, MetricKind};

pub use bootstrap::{bootstrap_stability, sample_case_indices, StabilityReport, DEFAULT_BOOTSTRAP_SAMPLES};
pub use stats::{kendall_tau, wilcoxon_one_sided, WilcoxonResult, EXACT_WILCOXON_MAX_N};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamResult {
    pub team: String,
    pub per_case: Vec<CaseMetrics>,
    pub mean_runtime_s: f64,
    /// Case identifiers aligned with `per_case`; checked across teams when
    /// non-empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub case_ids: Vec<String>,
}

/// Per-team metric means in [`MetricKind::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamMeans {
    pub team: String,
    pub means: [f64; 6],
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub team: String,
    pub means: [f64; 6],
    pub ranks: [usize; 6],
    pub mean_rank: f64,
    pub final_rank: usize,
    pub runtime_s: f64,
    /// Set when the position against a neighbour was decided by team name
    /// because mean rank and runtime were both equal.
    pub name_tiebreak: bool,
}

/// Entries ordered by final rank.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub entries: Vec<LeaderboardEntry>,
}

impl Leaderboard {
    pub fn order(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.team.as_str()).collect()
    }

    pub fn entry(&self, team: &str) -> Option<&LeaderboardEntry> {
        self.entries.iter().find(|e| e.team == team)
    }
}

fn check_alignment(results: &[TeamResult]) -> Result<usize> {
    let Some(first) = results.first() else {
        return Ok(0);
    };
    let n = first.per_case.len();
    for r in results {
        if r.per_case.len() != n {
            return Err(Error::CaseAlignment("teams report different case counts"));
        }
        if !r.case_ids.is_empty() && r.case_ids.len() != n {
            return Err(Error::CaseAlignment("case ids do not match case metrics"));
        }
        if !first.case_ids.is_empty() && !r.case_ids.is_empty() && r.case_ids != first.case_ids {
            return Err(Error::CaseAlignment("teams report cases in different order"));
        }
    }
    Ok(n)
}

fn means_over<'a>(cases: impl Iterator<Item = &'a CaseMetrics>) -> [f64; 6] {
    let mut sums = [0.0; 6];
    let mut n = 0usize;
    for c in cases {
        for (s, v) in sums.iter_mut().zip(c.values()) {
            *s += v;
        }
        n += 1;
    }
    sums.map(|s| s / n as f64)
}

/// Arithmetic mean of each metric over a team's cases.
pub fn aggregate_means(results: &[TeamResult]) -> Result<Vec<TeamMeans>> {
    let n = check_alignment(results)?;
    if n == 0 && !results.is_empty() {
        return Err(Error::CaseAlignment("teams report no cases"));
    }
    Ok(results
        .iter()
        .map(|r| TeamMeans {
            team: r.team.clone(),
            means: means_over(r.per_case.iter()),
            runtime_s: r.mean_runtime_s,
        })
        .collect())
}

/// `Less` when `a` is strictly better than `b`. NaN ranks last.
fn compare_metric(kind: MetricKind, a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ if kind.higher_is_better() => b.partial_cmp(&a).unwrap(),
        _ => a.partial_cmp(&b).unwrap(),
    }
}

/// Per-metric competition ranks: 1 + number of strictly better teams.
fn metric_ranks(table: &[TeamMeans], kind: MetricKind) -> Vec<usize> {
    let k = MetricKind::ALL.iter().position(|&m| m == kind).unwrap();
    table
        .iter()
        .map(|t| {
            1 + table
                .iter()
                .filter(|o| compare_metric(kind, o.means[k], t.means[k]) == Ordering::Less)
                .count()
        })
        .collect()
}

/// Builds the leaderboard from per-team metric means.
pub fn rank_teams(table: &[TeamMeans]) -> Result<Leaderboard> {
    if table.len() < 2 {
        return Err(Error::InsufficientTeams(table.len()));
    }
    let per_metric: Vec<Vec<usize>> = MetricKind::ALL.iter().map(|&k| metric_ranks(table, k)).collect();
    // Rank sums are integers, so mean-rank comparisons are exact.
    let rank_sum = |t: usize| per_metric.iter().map(|r| r[t]).sum::<usize>();

    let mut order: Vec<usize> = (0..table.len()).collect();
    let tie_key = |t: usize| (rank_sum(t), table[t].runtime_s);
    order.sort_by(|&a, &b| {
        rank_sum(a)
            .cmp(&rank_sum(b))
            .then(table[a].runtime_s.total_cmp(&table[b].runtime_s))
            .then_with(|| table[a].team.cmp(&table[b].team))
    });

    let mut entries: Vec<LeaderboardEntry> = order
        .iter()
        .enumerate()
        .map(|(pos, &t)| LeaderboardEntry {
            team: table[t].team.clone(),
            means: table[t].means,
            ranks: core::array::from_fn(|k| per_metric[k][t]),
            mean_rank: rank_sum(t) as f64 / MetricKind::ALL.len() as f64,
            final_rank: pos + 1,
            runtime_s: table[t].runtime_s,
            name_tiebreak: false,
        })
        .collect();
    for w in 0..order.len().saturating_sub(1) {
        let (a, b) = (tie_key(order[w]), tie_key(order[w + 1]));
        if a.0 == b.0 && a.1.total_cmp(&b.1) == Ordering::Equal {
            entries[w].name_tiebreak = true;
            entries[w + 1].name_tiebreak = true;
        }
    }
    Ok(Leaderboard { entries })
}

/// Final rank of each team, in the order of `table`.
pub(crate) fn final_ranks_in_input_order(table: &[TeamMeans]) -> Result<Vec<usize>> {
    let board = rank_teams(table)?;
    Ok(table
        .iter()
        .map(|t| board.entries.iter().find(|e| e.team == t.team).map(|e| e.final_rank).unwrap())
        .collect())
}

/// One cell of a significance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "snake_case")]
pub enum Significance {
    Diagonal,
    PValue(f64),
    /// Every paired difference was zero.
    Degenerate,
    /// Fewer than five non-zero differences.
    TooFewSamples,
}

impl Significance {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            Self::PValue(p) => Some(*p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub metric: MetricKind,
    pub teams: Vec<String>,
    /// `cells[i][j]` tests whether team `i` scores higher than team `j`.
    pub cells: Vec<Vec<Significance>>,
}

/// One-sided signed-rank tests between every ordered pair of teams.
///
/// For lower-is-better metrics the alternative is that team `i` scores
/// lower than team `j`, so a small p-value always means "`i` is better".
pub fn significance_matrix(results: &[TeamResult], metric: MetricKind) -> Result<SignificanceMatrix> {
    check_alignment(results)?;
    let series: Vec<Vec<f64>> = results
        .iter()
        .map(|r| {
            r.per_case
                .iter()
                .map(|c| {
                    let v = c.metric(metric);
                    if metric.higher_is_better() { v } else { -v }
                })
                .collect()
        })
        .collect();
    let t = results.len();
    let mut cells = alloc::vec![alloc::vec![Significance::Diagonal; t]; t];
    for i in 0..t {
        for j in 0..t {
            if i == j {
                continue;
            }
            cells[i][j] = match wilcoxon_one_sided(&series[i], &series[j]) {
                Ok(r) => Significance::PValue(r.p_value),
                Err(Error::DegenerateTest) => Significance::Degenerate,
                Err(Error::TooFewSamples(_)) => Significance::TooFewSamples,
                Err(e) => return Err(e),
            };
        }
    }
    Ok(SignificanceMatrix {
        metric,
        teams: results.iter().map(|r| r.team.clone()).collect(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn case(v: [f64; 6]) -> CaseMetrics {
        CaseMetrics {
            iou_f: v[0],
            hd95_f: v[1],
            assd_f: v[2],
            iou_a: v[3],
            hd95_a: v[4],
            assd_a: v[5],
            fp_count: 0,
            runtime_s: None,
        }
    }

    fn team(name: &str, cases: Vec<CaseMetrics>, runtime: f64) -> TeamResult {
        TeamResult { team: name.to_string(), per_case: cases, mean_runtime_s: runtime, case_ids: vec![] }
    }

    fn means(name: &str, m: [f64; 6], runtime: f64) -> TeamMeans {
        TeamMeans { team: name.to_string(), means: m, runtime_s: runtime }
    }

    #[test]
    fn aggregate_examples() {
        let one = aggregate_means(&[team("a", vec![case([0.8, 1.0, 2.0, 0.9, 3.0, 4.0])], 1.0)]).unwrap();
        assert_eq!(one[0].means, [0.8, 1.0, 2.0, 0.9, 3.0, 4.0]);
        let two = aggregate_means(&[team("a", vec![case([0.8; 6]), case([0.9; 6])], 1.0)]).unwrap();
        assert!((two[0].means[0] - 0.85).abs() < 1e-15);
        let constant = aggregate_means(&[team("a", vec![case([0.5; 6]); 7], 1.0)]).unwrap();
        assert_eq!(constant[0].means, [0.5; 6]);
    }

    #[test]
    fn aggregate_rejects_misaligned() {
        let r = aggregate_means(&[team("a", vec![case([0.5; 6])], 1.0), team("b", vec![], 1.0)]);
        assert!(matches!(r, Err(Error::CaseAlignment(_))));
    }

    #[test]
    fn dominant_team_ranks_first() {
        let t = [means("weak", [0.5, 9.0, 9.0, 0.5, 9.0, 9.0], 1.0), means("strong", [0.9, 1.0, 1.0, 0.9, 1.0, 1.0], 99.0)];
        let b = rank_teams(&t).unwrap();
        assert_eq!(b.order(), vec!["strong", "weak"]);
        assert_eq!(b.entries[0].ranks, [1; 6]);
        assert_eq!(b.entries[1].mean_rank, 2.0);
    }

    #[test]
    fn ties_share_minimum_rank_and_runtime_breaks_final_ties() {
        let t = [
            means("slow", [0.9, 1.0, 1.0, 0.9, 1.0, 1.0], 20.0),
            means("fast", [0.9, 1.0, 1.0, 0.9, 1.0, 1.0], 10.0),
            means("last", [0.1, 9.0, 9.0, 0.1, 9.0, 9.0], 1.0),
        ];
        let b = rank_teams(&t).unwrap();
        assert_eq!(b.order(), vec!["fast", "slow", "last"]);
        assert_eq!(b.entries[0].ranks, [1; 6]);
        assert_eq!(b.entries[1].ranks, [1; 6]);
        assert_eq!(b.entries[2].ranks, [3; 6]);
        assert!(!b.entries[0].name_tiebreak);
    }

    #[test]
    fn name_fallback_is_flagged() {
        let t = [means("b", [0.9; 6], 5.0), means("a", [0.9; 6], 5.0)];
        let b = rank_teams(&t).unwrap();
        assert_eq!(b.order(), vec!["a", "b"]);
        assert!(b.entries.iter().all(|e| e.name_tiebreak));
    }

    #[test]
    fn rank_teams_needs_two() {
        assert_eq!(rank_teams(&[means("a", [0.0; 6], 0.0)]), Err(Error::InsufficientTeams(1)));
    }

    #[test]
    fn significance_diagonal_and_degenerate() {
        let cases: Vec<CaseMetrics> = (0..8).map(|i| case([0.5 + i as f64 * 0.01; 6])).collect();
        let r = [team("a", cases.clone(), 1.0), team("b", cases, 1.0)];
        let m = significance_matrix(&r, MetricKind::IouF).unwrap();
        assert_eq!(m.cells[0][0], Significance::Diagonal);
        assert_eq!(m.cells[0][1], Significance::Degenerate);
    }

    #[test]
    fn significance_lower_is_better_orientation() {
        let good: Vec<CaseMetrics> = (0..10).map(|i| case([0.9, 1.0 + i as f64 * 0.1, 1.0, 0.9, 1.0, 1.0])).collect();
        let bad: Vec<CaseMetrics> = (0..10).map(|i| case([0.9, 5.0 + i as f64 * 0.3, 1.0, 0.9, 1.0, 1.0])).collect();
        let r = [team("good", good, 1.0), team("bad", bad, 1.0)];
        let m = significance_matrix(&r, MetricKind::Hd95F).unwrap();
        assert_eq!(m.cells[0][1], Significance::PValue(1.0 / 1024.0));
    }
}
