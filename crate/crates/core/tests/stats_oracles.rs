//! Ranking statistics against exhaustive or independent re-implementations.

use fracbench_core::evaluation::{CaseMetrics, MetricKind};
use fracbench_core::ranking::{
    bootstrap_stability, kendall_tau, rank_teams, sample_case_indices, significance_matrix, wilcoxon_one_sided,
    Significance, TeamMeans, TeamResult,
};
use fracbench_core::Error;
use proptest::prelude::*;

/// Exact one-sided p by enumerating all 2^n sign flips with average ranks.
fn wilcoxon_enumerated(x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let n = d.len();
    let ranks: Vec<f64> = d
        .iter()
        .map(|v| {
            let below = d.iter().filter(|w| w.abs() < v.abs()).count() as f64;
            let equal = d.iter().filter(|w| w.abs() == v.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let mut hits = 0u64;
    for mask in 0u64..1 << n {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

fn tau_pairs(a: &[f64], b: &[f64]) -> f64 {
    let (mut c, mut d, mut ta, mut tb) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let s = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            if a[i] == a[j] && b[i] == b[j] {
                continue;
            } else if a[i] == a[j] {
                ta += 1;
            } else if b[i] == b[j] {
                tb += 1;
            } else if s > 0.0 {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    (c - d) as f64 / (((c + d + ta) * (c + d + tb)) as f64).sqrt()
}

#[test]
fn wilcoxon_all_positive_n5() {
    let r = wilcoxon_one_sided(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]).unwrap();
    assert_eq!(r.p_value, 0.03125);
    assert!(r.exact);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wilcoxon_matches_enumeration(pairs in prop::collection::vec((-4i32..5, -4i32..5), 5..=12)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64 * 0.5).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64 * 0.5).collect();
        let nonzero = x.iter().zip(&y).filter(|(a, b)| a != b).count();
        match wilcoxon_one_sided(&x, &y) {
            Ok(r) => prop_assert!((r.p_value - wilcoxon_enumerated(&x, &y)).abs() <= 1e-12),
            Err(Error::DegenerateTest) => prop_assert_eq!(nonzero, 0),
            Err(Error::TooFewSamples(n)) => prop_assert!(n == nonzero && n < 5),
            Err(e) => prop_assert!(false, "unexpected {e:?}"),
        }
    }

    #[test]
    fn kendall_matches_pair_counting(perm in Just((0..10).collect::<Vec<usize>>()).prop_shuffle(), len in 2usize..=10) {
        let a: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let b: Vec<f64> = perm.iter().filter(|&&v| v < len).map(|&v| v as f64).collect();
        prop_assert_eq!(kendall_tau(&a, &b).unwrap(), tau_pairs(&a, &b));
    }

    #[test]
    fn kendall_with_ties(a in prop::collection::vec(0u8..4, 3..10), seed in 0u64..1000) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| ((*v as u64 * 7 + i as u64 * seed) % 5) as f64).collect();
        let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
        match kendall_tau(&a, &b) {
            Ok(t) => prop_assert!((t - tau_pairs(&a, &b)).abs() <= 1e-15),
            Err(_) => prop_assert!(a.iter().all(|v| *v == a[0]) || b.iter().all(|v| *v == b[0])),
        }
    }
}

fn case(iou: f64, dist: f64) -> CaseMetrics {
    CaseMetrics {
        iou_f: iou,
        hd95_f: dist,
        assd_f: dist / 3.0,
        iou_a: (iou + 0.1).min(1.0),
        hd95_a: dist * 0.5,
        assd_a: dist / 6.0,
        fp_count: 0,
        runtime_s: None,
    }
}

/// Competition ranks, mean rank, runtime then name tie-break.
fn oracle_final_ranks(means: &[[f64; 6]], runtime: &[f64], names: &[String]) -> Vec<usize> {
    let t = means.len();
    let mut rank_sum = vec![0usize; t];
    for (m, kind) in MetricKind::ALL.iter().enumerate() {
        for i in 0..t {
            let better = (0..t)
                .filter(|&j| if kind.higher_is_better() { means[j][m] > means[i][m] } else { means[j][m] < means[i][m] })
                .count();
            rank_sum[i] += better + 1;
        }
    }
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| {
        rank_sum[a].cmp(&rank_sum[b]).then(runtime[a].total_cmp(&runtime[b])).then(names[a].cmp(&names[b]))
    });
    let mut out = vec![0; t];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos + 1;
    }
    out
}

fn synthetic_study(seed: u64, teams: usize, cases: usize) -> Vec<TeamResult> {
    let mut s = seed | 1;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..teams)
        .map(|t| TeamResult {
            team: format!("team{t}"),
            per_case: (0..cases).map(|_| case(0.5 + 0.4 * next(), 2.0 + 30.0 * next())).collect(),
            mean_runtime_s: 100.0 + t as f64,
            case_ids: Vec::new(),
        })
        .collect()
}

#[test]
fn rank_teams_matches_oracle() {
    for seed in 0..50 {
        let study = synthetic_study(seed, 6, 8);
        let table: Vec<TeamMeans> = study
            .iter()
            .map(|r| TeamMeans {
                team: r.team.clone(),
                means: std::array::from_fn(|m| r.per_case.iter().map(|c| c.values()[m]).sum::<f64>() / 8.0),
                runtime_s: r.mean_runtime_s,
            })
            .collect();
        let board = rank_teams(&table).unwrap();
        let expect = oracle_final_ranks(
            &table.iter().map(|t| t.means).collect::<Vec<_>>(),
            &table.iter().map(|t| t.runtime_s).collect::<Vec<_>>(),
            &table.iter().map(|t| t.team.clone()).collect::<Vec<_>>(),
        );
        for (t, r) in table.iter().zip(expect) {
            assert_eq!(board.entry(&t.team).unwrap().final_rank, r);
        }
    }
}

#[test]
fn bootstrap_matches_independent_loop() {
    let study = synthetic_study(7, 5, 12);
    let n_samples = 200;
    let report = bootstrap_stability(&study, n_samples, 99).unwrap();
    let names: Vec<String> = study.iter().map(|r| r.team.clone()).collect();
    let runtime: Vec<f64> = study.iter().map(|r| r.mean_runtime_s).collect();
    let full: Vec<[f64; 6]> = study
        .iter()
        .map(|r| std::array::from_fn(|m| r.per_case.iter().map(|c| c.values()[m]).sum::<f64>() / 12.0))
        .collect();
    let original = oracle_final_ranks(&full, &runtime, &names);
    assert_eq!(report.original_ranks, original);

    let mut freq = vec![vec![0usize; 5]; 5];
    let mut taus = Vec::new();
    for b in 0..n_samples as u64 {
        let idx = sample_case_indices(99, b, 12);
        let means: Vec<[f64; 6]> = study
            .iter()
            .map(|r| std::array::from_fn(|m| idx.iter().map(|&i| r.per_case[i].values()[m]).sum::<f64>() / 12.0))
            .collect();
        let ranks = oracle_final_ranks(&means, &runtime, &names);
        for (t, r) in ranks.iter().enumerate() {
            freq[t][r - 1] += 1;
        }
        let o: Vec<f64> = original.iter().map(|&r| r as f64).collect();
        let s: Vec<f64> = ranks.iter().map(|&r| r as f64).collect();
        taus.push(tau_pairs(&o, &s));
    }
    for t in 0..5 {
        for r in 0..5 {
            assert_eq!(report.rank_frequency[t][r], freq[t][r] as f64 / n_samples as f64);
        }
    }
    for (a, b) in report.tau_samples.iter().zip(&taus) {
        assert!((a - b).abs() < 1e-15);
    }
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    assert!((report.tau_mean - mean).abs() < 1e-12);
    assert!(report.tau_ci95.0 <= report.tau_mean && report.tau_mean <= report.tau_ci95.1);
}

#[test]
fn bootstrap_indices_are_uniform_enough() {
    let mut hist = [0usize; 10];
    for b in 0..2000 {
        for i in sample_case_indices(5, b, 10) {
            hist[i] += 1;
        }
    }
    // 20000 draws, expected 2000 per bin, sd ≈ 42.
    assert!(hist.iter().all(|&h| (h as f64 - 2000.0).abs() < 6.0 * 42.5), "{hist:?}");
}

#[test]
fn significance_matrix_orientation_and_degenerate() {
    let mut study = synthetic_study(3, 3, 10);
    // team0 strictly better than team1 on every case.
    for (a, b) in study[0].per_case.clone().iter().zip(study[1].per_case.iter_mut()) {
        *b = CaseMetrics { iou_f: a.iou_f - 0.1, hd95_f: a.hd95_f + 1.0, ..*a };
    }
    study[2].per_case = study[0].per_case.clone();
    let m = significance_matrix(&study, MetricKind::IouF).unwrap();
    assert_eq!(m.cells[0][0], Significance::Diagonal);
    assert_eq!(m.cells[0][1].p_value(), Some(1.0 / 1024.0));
    assert!(m.cells[1][0].p_value().unwrap() > 0.99);
    assert_eq!(m.cells[0][2], Significance::Degenerate);
    let hd = significance_matrix(&study, MetricKind::Hd95F).unwrap();
    assert_eq!(hd.cells[0][1].p_value(), Some(1.0 / 1024.0));
}
