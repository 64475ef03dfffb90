//! CSV and JSON writers for leaderboards, stability and significance
//! reports, and per-case tables.
//!
//! Floats are written with six significant digits in both formats, so a
//! CSV file and its JSON twin hold the same numbers.

use std::path::Path;

use fracbench_core::evaluation::MetricKind;
use fracbench_core::ranking::{Leaderboard, LeaderboardEntry, Significance, SignificanceMatrix, StabilityReport, TeamResult};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// `%g`-style formatting with six significant digits.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to what [`fmt6`] prints.
pub fn round6(x: f64) -> f64 {
    if x.is_finite() {
        fmt6(x).parse().unwrap()
    } else {
        x
    }
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round6).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to six significant digits.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Internal(e.to_string()))
}

/// One leaderboard row with named metric columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRecord {
    pub team: String,
    pub iou_f: f64,
    pub hd95_f: f64,
    pub assd_f: f64,
    pub iou_a: f64,
    pub hd95_a: f64,
    pub assd_a: f64,
    pub rank_iou_f: usize,
    pub rank_hd95_f: usize,
    pub rank_assd_f: usize,
    pub rank_iou_a: usize,
    pub rank_hd95_a: usize,
    pub rank_assd_a: usize,
    pub mean_rank: f64,
    pub final_rank: usize,
    pub runtime_s: f64,
}

impl From<&LeaderboardEntry> for LeaderboardRecord {
    fn from(e: &LeaderboardEntry) -> Self {
        let [iou_f, hd95_f, assd_f, iou_a, hd95_a, assd_a] = e.means.map(round6);
        let [rank_iou_f, rank_hd95_f, rank_assd_f, rank_iou_a, rank_hd95_a, rank_assd_a] = e.ranks;
        Self {
            team: e.team.clone(),
            iou_f,
            hd95_f,
            assd_f,
            iou_a,
            hd95_a,
            assd_a,
            rank_iou_f,
            rank_hd95_f,
            rank_assd_f,
            rank_iou_a,
            rank_hd95_a,
            rank_assd_a,
            mean_rank: round6(e.mean_rank),
            final_rank: e.final_rank,
            runtime_s: round6(e.runtime_s),
        }
    }
}

pub const LEADERBOARD_COLUMNS: [&str; 16] = [
    "team",
    "iou_f",
    "hd95_f",
    "assd_f",
    "iou_a",
    "hd95_a",
    "assd_a",
    "rank_iou_f",
    "rank_hd95_f",
    "rank_assd_f",
    "rank_iou_a",
    "rank_hd95_a",
    "rank_assd_a",
    "mean_rank",
    "final_rank",
    "runtime_s",
];

pub fn leaderboard_records(board: &Leaderboard) -> Vec<LeaderboardRecord> {
    board.entries.iter().map(LeaderboardRecord::from).collect()
}

fn leaderboard_csv(board: &Leaderboard) -> Result<Vec<u8>> {
    let header = LEADERBOARD_COLUMNS.map(String::from);
    let rows: Vec<Vec<String>> = board
        .entries
        .iter()
        .map(|e| {
            let mut r = vec![e.team.clone()];
            r.extend(e.means.iter().map(|&m| fmt6(m)));
            r.extend(e.ranks.iter().map(|k| k.to_string()));
            r.push(fmt6(e.mean_rank));
            r.push(e.final_rank.to_string());
            r.push(fmt6(e.runtime_s));
            r
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub fn read_leaderboard_csv(bytes: &[u8]) -> Result<Vec<LeaderboardRecord>> {
    csv::Reader::from_reader(bytes).deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_leaderboard_json(bytes: &[u8]) -> Result<Vec<LeaderboardRecord>> {
    Ok(serde_json::from_slice(bytes)?)
}

fn stability_csv(r: &StabilityReport) -> Result<Vec<u8>> {
    let mut header = vec!["team".to_string(), "original_rank".to_string()];
    header.extend((1..=r.teams.len()).map(|k| format!("p_rank_{k}")));
    let rows: Vec<Vec<String>> = r
        .teams
        .iter()
        .zip(&r.original_ranks)
        .zip(&r.rank_frequency)
        .map(|((t, rank), freq)| {
            let mut row = vec![t.clone(), rank.to_string()];
            row.extend(freq.iter().map(|&f| fmt6(f)));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

fn cell_text(c: &Significance) -> (&'static str, String) {
    match c {
        Significance::Diagonal => ("diagonal", String::new()),
        Significance::PValue(p) => ("p_value", fmt6(*p)),
        Significance::Degenerate => ("degenerate", String::new()),
        Significance::TooFewSamples => ("too_few_samples", String::new()),
    }
}

fn significance_csv(ms: &[SignificanceMatrix]) -> Result<Vec<u8>> {
    let header = ["metric", "team", "versus", "status", "p_value"].map(String::from);
    let mut rows = Vec::new();
    for m in ms {
        for (i, row) in m.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                let (status, p) = cell_text(c);
                rows.push(vec![m.metric.name().into(), m.teams[i].clone(), m.teams[j].clone(), status.into(), p]);
            }
        }
    }
    csv_bytes(&header, &rows)
}

pub const PER_CASE_COLUMNS: [&str; 10] =
    ["team", "case", "iou_f", "hd95_f", "assd_f", "iou_a", "hd95_a", "assd_a", "fp_count", "runtime_s"];

fn per_case_csv(results: &[TeamResult]) -> Result<Vec<u8>> {
    let header = PER_CASE_COLUMNS.map(String::from);
    let mut rows = Vec::new();
    for t in results {
        for (k, c) in t.per_case.iter().enumerate() {
            let case = t.case_ids.get(k).cloned().unwrap_or_else(|| k.to_string());
            let mut row = vec![t.team.clone(), case];
            row.extend(MetricKind::ALL.iter().map(|&m| fmt6(c.metric(m))));
            row.push(c.fp_count.to_string());
            row.push(c.runtime_s.map(fmt6).unwrap_or_default());
            rows.push(row);
        }
    }
    csv_bytes(&header, &rows)
}

/// Anything the benchmark writes as a table.
#[derive(Debug, Clone, Copy)]
pub enum Results<'a> {
    Leaderboard(&'a Leaderboard),
    Stability(&'a StabilityReport),
    Significance(&'a [SignificanceMatrix]),
    PerCase(&'a [TeamResult]),
}

pub fn encode_results(results: Results<'_>, format: Format) -> Result<Vec<u8>> {
    match (results, format) {
        (Results::Leaderboard(b), Format::Csv) => leaderboard_csv(b),
        (Results::Leaderboard(b), Format::Json) => to_json(&leaderboard_records(b)),
        (Results::Stability(s), Format::Csv) => stability_csv(s),
        (Results::Stability(s), Format::Json) => to_json(s),
        (Results::Significance(m), Format::Csv) => significance_csv(m),
        (Results::Significance(m), Format::Json) => to_json(m),
        (Results::PerCase(r), Format::Csv) => per_case_csv(r),
        (Results::PerCase(r), Format::Json) => to_json(r),
    }
}

pub fn write_results(results: Results<'_>, path: &Path, format: Format) -> Result<()> {
    write_atomic(path, &encode_results(results, format)?)
}
