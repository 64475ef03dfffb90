//! The work behind each CLI subcommand, callable without a process.

use std::path::{Path, PathBuf};

use fracbench_core::drr::{CameraGeometry, SimulationConfig, Simulator};
use fracbench_core::evaluation::{evaluate_case, CaseLabels, CaseMetrics, MetricKind};
use fracbench_core::phantom::{generate_phantom, perturb, PerturbationSpec, PhantomSpec, PhantomWarning};
use fracbench_core::ranking::{
    aggregate_means, bootstrap_stability, rank_teams, significance_matrix, Leaderboard, SignificanceMatrix,
    StabilityReport, TeamMeans, TeamResult,
};
use fracbench_core::volume::{LabelField, LabelVolume, MultiLabelMask2D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::mha::{read_intensity_volume, read_label_volume, write_intensity_volume, write_label_volume, ReadOptions};
use crate::io::tiff::{read_mask_tiff, write_float_tiff, write_mask_tiff, FloatImage};
use crate::io::{create_dir, write_atomic};
use crate::results::{to_json, write_results, Format, Results};
use crate::study::{
    case_file, discover_cases, load_study, missing_prediction_warning, team_result, Study, StudyDocument,
    StudyManifest, TaskKind,
};

/// Runs `f` on a pool of `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Input("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Internal(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

enum Labels {
    Volume(LabelVolume),
    Mask(MultiLabelMask2D),
}

impl Labels {
    fn load(path: &Path, task: TaskKind) -> Result<Self> {
        Ok(match task {
            TaskKind::Ct => Self::Volume(read_label_volume(path, &ReadOptions::default())?),
            TaskKind::Xray => Self::Mask(read_mask_tiff(path)?),
        })
    }

    fn empty_like(&self) -> Self {
        match self {
            Self::Volume(v) => Self::Volume(LabelVolume::zeros(*v.grid())),
            Self::Mask(m) => Self::Mask(MultiLabelMask2D::zeros(m.width(), m.height())),
        }
    }

    fn case(&self) -> CaseLabels<'_> {
        match self {
            Self::Volume(v) => v.into(),
            Self::Mask(m) => m.into(),
        }
    }
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Core(c) => Error::Input(format!("{}: {c}", path.display())),
        other => other,
    })
}

/// Scores every team on every case of a manifest. A missing prediction
/// is scored as an empty one and reported in `warnings`.
pub fn evaluate_study(manifest: &StudyManifest) -> Result<Study> {
    let task = manifest.task;
    let cases = match &manifest.cases {
        Some(c) => c.clone(),
        None => discover_cases(&manifest.ground_truth, task)?,
    };
    let per_case: Vec<(Vec<CaseMetrics>, Vec<String>)> = cases
        .par_iter()
        .map(|case| {
            let gt_path = case_file(&manifest.ground_truth, case, task)
                .ok_or_else(|| Error::Input(format!("no ground truth for case {case:?}")))?;
            let gt = with_path(&gt_path, Labels::load(&gt_path, task))?;
            let mut metrics = Vec::with_capacity(manifest.teams.len());
            let mut warnings = Vec::new();
            for team in &manifest.teams {
                let (pred, path) = match case_file(&team.predictions, case, task) {
                    Some(p) => (with_path(&p, Labels::load(&p, task))?, p),
                    None => {
                        warnings.push(missing_prediction_warning(&team.name, case));
                        (gt.empty_like(), gt_path.clone())
                    }
                };
                let m = with_path(&path, Ok(evaluate_case(gt.case(), pred.case(), Some(team.runtime_s))?))?;
                metrics.push(m);
            }
            Ok((metrics, warnings))
        })
        .collect::<Result<_>>()?;

    let teams = manifest
        .teams
        .iter()
        .enumerate()
        .map(|(t, entry)| {
            team_result(&entry.name, entry.runtime_s, &cases, per_case.iter().map(|(m, _)| m[t]).collect())
        })
        .collect();
    let warnings = per_case.into_iter().flat_map(|(_, w)| w).collect();
    Ok(Study { task, cases, teams, warnings })
}

/// `evaluate`: writes `study.json` and `per_case.csv` into `out`.
pub fn run_evaluate(manifest: &StudyManifest, out: &Path) -> Result<Study> {
    let study = evaluate_study(manifest)?;
    create_dir(out)?;
    write_atomic(&out.join("study.json"), &to_json(&study)?)?;
    write_results(Results::PerCase(&study.teams), &out.join("per_case.csv"), Format::Csv)?;
    Ok(study)
}

pub fn study_means(doc: &StudyDocument) -> Result<Vec<TeamMeans>> {
    Ok(match doc {
        StudyDocument::PerCase(s) => aggregate_means(&s.teams)?,
        StudyDocument::MeansOnly(m) => m.teams.iter().map(TeamMeans::from).collect(),
    })
}

fn require_per_case<'a>(doc: &'a StudyDocument, what: &str) -> Result<&'a [TeamResult]> {
    doc.per_case()
        .ok_or_else(|| Error::Input(format!("{what} needs per-case results, not team means")))
}

fn write_both(results: Results<'_>, out: &Path, stem: &str) -> Result<()> {
    create_dir(out)?;
    for f in [Format::Csv, Format::Json] {
        write_results(results, &out.join(format!("{stem}.{}", f.extension())), f)?;
    }
    Ok(())
}

/// `rank`: writes `leaderboard.csv` and `leaderboard.json`.
pub fn run_rank(study: &Path, out: &Path) -> Result<Leaderboard> {
    let board = rank_teams(&study_means(&load_study(study)?)?)?;
    write_both(Results::Leaderboard(&board), out, "leaderboard")?;
    Ok(board)
}

/// `bootstrap`: writes `stability.csv` and `stability.json`.
pub fn run_bootstrap(study: &Path, out: &Path, n_samples: usize, seed: u64) -> Result<StabilityReport> {
    let doc = load_study(study)?;
    let report = bootstrap_stability(require_per_case(&doc, "bootstrap")?, n_samples, seed)?;
    write_both(Results::Stability(&report), out, "stability")?;
    Ok(report)
}

/// `significance`: one matrix per metric, written to `significance.csv`
/// and `significance.json`.
pub fn run_significance(study: &Path, out: &Path) -> Result<Vec<SignificanceMatrix>> {
    let doc = load_study(study)?;
    let teams = require_per_case(&doc, "significance")?;
    let ms = MetricKind::ALL.iter().map(|&m| significance_matrix(teams, m)).collect::<fracbench_core::Result<Vec<_>>>()?;
    write_both(Results::Significance(&ms), out, "significance")?;
    Ok(ms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub view: usize,
    pub seed: u64,
    pub polar_angle_deg: f64,
    pub pose: CameraGeometry,
}

/// Image, mask and pose files written for view `k`. Masks live in their
/// own directory so it can serve as an X-ray ground-truth folder.
pub fn view_paths(out: &Path, k: usize) -> [PathBuf; 3] {
    [
        out.join("images").join(format!("view_{k:03}.tif")),
        out.join("masks").join(format!("view_{k:03}.tif")),
        out.join("poses").join(format!("view_{k:03}.json")),
    ]
}

/// `simulate`: renders `n_views` radiographs. View `k` draws from a
/// ChaCha8 stream `k` under `seed`, so output does not depend on the
/// number of threads.
pub fn run_simulate(
    ct: &Path,
    labels: &Path,
    config: &SimulationConfig,
    n_views: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<ViewRecord>> {
    if n_views == 0 {
        return Ok(Vec::new());
    }
    let opts = ReadOptions::default();
    let ct = with_path(ct, read_intensity_volume(ct, &opts))?;
    let gt = with_path(labels, read_label_volume(labels, &opts))?;
    let sim = Simulator::new(&ct, &gt, config)?;
    for sub in ["images", "masks", "poses"] {
        create_dir(&out.join(sub))?;
    }
    (0..n_views)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let view = sim.render(&mut rng)?;
            let [image, mask, pose] = view_paths(out, k);
            let img = FloatImage {
                width: view.image.width,
                height: view.image.height,
                pixels: view.image.values.iter().map(|&v| v as f32).collect(),
            };
            write_float_tiff(&img, &image)?;
            write_mask_tiff(&view.mask, &mask)?;
            let record = ViewRecord {
                view: k,
                seed,
                polar_angle_deg: fracbench_core::drr::polar_angle(&view.pose).to_degrees(),
                pose: view.pose,
            };
            write_atomic(&pose, &serde_json::to_vec_pretty(&record)?)?;
            Ok(record)
        })
        .collect()
}

/// `phantom`: writes `ct.mha`, `gt.mha`, the spec used, and `pred.mha`
/// when a perturbation is given.
pub fn run_phantom(
    spec: &PhantomSpec,
    perturbation: Option<&PerturbationSpec>,
    out: &Path,
    compress: bool,
) -> Result<Vec<PhantomWarning>> {
    let phantom = generate_phantom(spec)?;
    let pred = perturbation.map(|p| perturb(&phantom.gt, p)).transpose()?;
    create_dir(out)?;
    write_intensity_volume(&phantom.ct, &out.join("ct.mha"), compress)?;
    write_label_volume(&phantom.gt, &out.join("gt.mha"), compress)?;
    write_atomic(&out.join("phantom.json"), &serde_json::to_vec_pretty(spec)?)?;
    if let Some(pred) = pred {
        write_label_volume(&pred, &out.join("pred.mha"), compress)?;
    }
    Ok(phantom.warnings)
}
