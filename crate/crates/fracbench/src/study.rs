//! Study manifests (what to evaluate) and study documents (what was
//! measured).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fracbench_core::evaluation::CaseMetrics;
use fracbench_core::ranking::{TeamMeans, TeamResult};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Label volumes stored as `.mha`.
    Ct,
    /// Multi-label masks stored as `.tif`.
    Xray,
}

impl TaskKind {
    pub fn extensions(self) -> &'static [&'static str] {
        match self {
            Self::Ct => &["mha"],
            Self::Xray => &["tif", "tiff"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamEntry {
    pub name: String,
    pub predictions: PathBuf,
    /// Mean inference time per case, in seconds.
    #[serde(default)]
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub task: TaskKind,
    pub ground_truth: PathBuf,
    pub teams: Vec<TeamEntry>,
    /// Case stems to evaluate; defaults to every ground-truth file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<String>>,
}

fn read_json(path: &Path) -> Result<Value> {
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn from_value<T: serde::de::DeserializeOwned>(path: &Path, v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Loads a JSON document of any deserializable type.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    from_value(path, read_json(path)?)
}

/// Loads a manifest; relative directories resolve against its location.
pub fn load_manifest(path: &Path) -> Result<StudyManifest> {
    let mut m: StudyManifest = load_json(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    m.ground_truth = base.join(&m.ground_truth);
    for t in &mut m.teams {
        t.predictions = base.join(&t.predictions);
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = m.teams.iter().find(|t| !seen.insert(t.name.as_str())) {
        return Err(Error::Input(format!("team {:?} listed twice", dup.name)));
    }
    Ok(m)
}

/// Case stem of a file, when its extension belongs to `task`.
fn case_stem(path: &Path, task: TaskKind) -> Option<String> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    task.extensions().contains(&ext.as_str()).then(|| path.file_stem()?.to_str().map(String::from))?
}

/// Case stems present in `dir`, sorted.
pub fn discover_cases(dir: &Path, task: TaskKind) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::read(dir, e))?;
    let mut cases = BTreeSet::new();
    for e in entries {
        let p = e.map_err(|e| Error::read(dir, e))?.path();
        if p.is_file() {
            if let Some(stem) = case_stem(&p, task) {
                if !cases.insert(stem.clone()) {
                    return Err(Error::Input(format!("case {stem:?} appears twice in {}", dir.display())));
                }
            }
        }
    }
    Ok(cases.into_iter().collect())
}

/// File for `case` in `dir`, if any.
pub fn case_file(dir: &Path, case: &str, task: TaskKind) -> Option<PathBuf> {
    task.extensions().iter().map(|ext| dir.join(format!("{case}.{ext}"))).find(|p| p.is_file())
}

/// Output of `evaluate`: per-case metrics for every team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub task: TaskKind,
    pub cases: Vec<String>,
    pub teams: Vec<TeamResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Team means with named metric fields, as in a published table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeansRecord {
    pub team: String,
    pub iou_f: f64,
    pub hd95_f: f64,
    pub assd_f: f64,
    pub iou_a: f64,
    pub hd95_a: f64,
    pub assd_a: f64,
    #[serde(default)]
    pub runtime_s: f64,
}

impl From<&MeansRecord> for TeamMeans {
    fn from(r: &MeansRecord) -> Self {
        TeamMeans {
            team: r.team.clone(),
            means: [r.iou_f, r.hd95_f, r.assd_f, r.iou_a, r.hd95_a, r.assd_a],
            runtime_s: r.runtime_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeansStudy {
    pub teams: Vec<MeansRecord>,
}

/// Input accepted by the ranking commands.
#[derive(Debug, Clone, PartialEq)]
pub enum StudyDocument {
    PerCase(Study),
    MeansOnly(MeansStudy),
}

impl StudyDocument {
    pub fn per_case(&self) -> Option<&[TeamResult]> {
        match self {
            Self::PerCase(s) => Some(&s.teams),
            Self::MeansOnly(_) => None,
        }
    }
}

/// Loads either document shape; a team entry carrying `per_case` selects
/// the per-case form.
pub fn load_study(path: &Path) -> Result<StudyDocument> {
    let v = read_json(path)?;
    let per_case = v
        .get("teams")
        .and_then(Value::as_array)
        .and_then(|t| t.first())
        .is_some_and(|t| t.get("per_case").is_some());
    if per_case {
        Ok(StudyDocument::PerCase(from_value(path, v)?))
    } else {
        Ok(StudyDocument::MeansOnly(from_value(path, v)?))
    }
}

/// Per-case metrics scored against an empty prediction, flagged in the
/// study warnings by the caller.
pub fn missing_prediction_warning(team: &str, case: &str) -> String {
    format!("team {team:?} has no prediction for case {case:?}; scored as empty")
}

pub fn team_result(name: &str, runtime_s: f64, cases: &[String], per_case: Vec<CaseMetrics>) -> TeamResult {
    TeamResult { team: name.to_string(), per_case, mean_runtime_s: runtime_s, case_ids: cases.to_vec() }
}
