//! Per-case scoring: fragment matching, missing-fragment penalties, anatomy
//! scores and false-positive counting.
//!
//! Matching is greedy and scoped to one bone. Ground-truth fragments are
//! visited largest first (ties by id); each claims the unclaimed predicted
//! fragment of the same bone with the highest IoU. Equal IoUs go to the
//! fragment whose cells come first in scan order, which keeps the result
//! independent of how the prediction numbers its fragments. A candidate
//! with zero overlap is never claimed, so a displaced prediction is both a
//! missed fragment and a false positive.
//!
//! A ground-truth fragment without a match scores IoU 0, HD95 equal to the
//! diameter and ASSD equal to the radius of the sphere circumscribing its
//! bounding box. A bone that is present in the ground truth but absent from
//! the prediction is penalized the same way at anatomy level.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{grouped_surfaces, iou_from_counts, BitGrouping, MetricValue, SurfaceDistances};
use crate::taxonomy::{anatomy_bits, decode_label, AnatomyClass, FragmentLabel};
use crate::volume::{LabelField, LabelVolume, MultiLabelMask2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragmentMatch {
    pub gt_label: FragmentLabel,
    pub pred_label: Option<FragmentLabel>,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// One entry per ground-truth fragment, in id order.
    pub matches: Vec<FragmentMatch>,
    /// Predicted fragments nobody claimed, in id order.
    pub unmatched_pred: Vec<FragmentLabel>,
}

/// The six per-case scores plus false positives and runtime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub iou_f: f64,
    pub hd95_f: f64,
    pub assd_f: f64,
    pub iou_a: f64,
    pub hd95_a: f64,
    pub assd_a: f64,
    pub fp_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

impl CaseMetrics {
    pub fn metric(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::IouF => self.iou_f,
            MetricKind::Hd95F => self.hd95_f,
            MetricKind::AssdF => self.assd_f,
            MetricKind::IouA => self.iou_a,
            MetricKind::Hd95A => self.hd95_a,
            MetricKind::AssdA => self.assd_a,
        }
    }

    pub fn values(&self) -> [f64; 6] {
        MetricKind::ALL.map(|k| self.metric(k))
    }
}

/// The six ranked metrics, in leaderboard column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    IouF,
    Hd95F,
    AssdF,
    IouA,
    Hd95A,
    AssdA,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] =
        [Self::IouF, Self::Hd95F, Self::AssdF, Self::IouA, Self::Hd95A, Self::AssdA];

    pub fn higher_is_better(self) -> bool {
        matches!(self, Self::IouF | Self::IouA)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::IouF => "iou_f",
            Self::Hd95F => "hd95_f",
            Self::AssdF => "assd_f",
            Self::IouA => "iou_a",
            Self::Hd95A => "hd95_a",
            Self::AssdA => "assd_a",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

/// Fragment-level outcome of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentEvaluation {
    pub iou_f: f64,
    pub hd95_f: f64,
    pub assd_f: f64,
    pub fp_count: usize,
    pub matching: Matching,
    /// Scores per ground-truth fragment, aligned with `matching.matches`.
    pub per_fragment: Vec<MetricValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnatomyEvaluation {
    pub iou_a: f64,
    pub hd95_a: f64,
    pub assd_a: f64,
    /// Scores per bone present in the ground truth.
    pub per_bone: Vec<(AnatomyClass, MetricValue)>,
}

fn check_grids<F: LabelField + ?Sized>(gt: &F, pred: &F) -> Result<()> {
    if gt.grid().matches(pred.grid()) {
        Ok(())
    } else {
        Err(Error::GridMismatch("ground truth and prediction grids differ"))
    }
}

/// Pairwise overlap counts between label groups of two fields.
fn overlaps<F: LabelField + ?Sized>(gt: &F, pred: &F, grouping: BitGrouping) -> Vec<usize> {
    let n = grouping.groups();
    let mut table = alloc::vec![0usize; n * n];
    let map = |b: u32| match grouping {
        BitGrouping::Fragments => b,
        BitGrouping::Anatomy => anatomy_bits(b),
    };
    for i in 0..gt.grid().len() {
        let g = map(gt.cell_bits(i));
        if g == 0 {
            continue;
        }
        let p = map(pred.cell_bits(i));
        if p == 0 {
            continue;
        }
        let mut gb = g;
        while gb != 0 {
            let gi = gb.trailing_zeros() as usize;
            gb &= gb - 1;
            let mut pb = p;
            while pb != 0 {
                let pi = pb.trailing_zeros() as usize;
                pb &= pb - 1;
                table[gi * n + pi] += 1;
            }
        }
    }
    table
}

/// True when fragment bit `p` of `field` precedes bit `q`: at the first cell
/// (in scan order) where their memberships differ, `p` is present. Cell sets
/// never depend on label numbering, so neither does this order.
fn precedes<F: LabelField + ?Sized>(field: &F, p: usize, q: usize) -> bool {
    let (bp, bq) = (1u32 << p, 1u32 << q);
    for i in 0..field.grid().len() {
        let b = field.cell_bits(i);
        if (b & bp != 0) != (b & bq != 0) {
            return b & bp != 0;
        }
    }
    false
}

/// Greedy one-to-one matching. Among predictions with equal IoU the one
/// whose cell set comes first in scan order wins.
fn greedy_match<F: LabelField + ?Sized>(
    gt_counts: &[usize],
    pred_counts: &[usize],
    inter: &[usize],
    pred: &F,
) -> Matching {
    let label = |bit: usize| decode_label(bit as u32 + 1).expect("bit < 30");
    let mut claimed = [false; 30];
    let mut by_gt: [Option<(usize, f64)>; 30] = [None; 30];

    for anatomy in AnatomyClass::ALL {
        let base = 10 * anatomy.code() as usize;
        let mut order: Vec<usize> = (base..base + 10).filter(|&g| gt_counts[g] > 0).collect();
        // Descending size, ascending id on ties (sort is stable).
        order.sort_by(|&a, &b| gt_counts[b].cmp(&gt_counts[a]));
        for g in order {
            let mut best: Option<(usize, f64)> = None;
            for p in (base..base + 10).filter(|&p| pred_counts[p] > 0 && !claimed[p]) {
                let i = inter[g * 30 + p];
                if i == 0 {
                    continue;
                }
                let score = iou_from_counts(i, gt_counts[g] + pred_counts[p] - i);
                if best.map_or(true, |(q, s)| score > s || (score == s && precedes(pred, p, q))) {
                    best = Some((p, score));
                }
            }
            if let Some((p, _)) = best {
                claimed[p] = true;
            }
            by_gt[g] = best;
        }
    }

    let matches = (0..30)
        .filter(|&g| gt_counts[g] > 0)
        .map(|g| FragmentMatch {
            gt_label: label(g),
            pred_label: by_gt[g].map(|(p, _)| label(p)),
            iou: by_gt[g].map_or(0.0, |(_, s)| s),
        })
        .collect();
    let unmatched_pred = (0..30)
        .filter(|&p| pred_counts[p] > 0 && !claimed[p])
        .map(label)
        .collect();
    Matching { matches, unmatched_pred }
}

/// One-to-one greedy fragment matching within each bone.
pub fn match_fragments<F: LabelField + ?Sized>(gt: &F, pred: &F) -> Result<Matching> {
    check_grids(gt, pred)?;
    let gt_counts = crate::volume::label_counts(gt);
    let pred_counts = crate::volume::label_counts(pred);
    let inter = overlaps(gt, pred, BitGrouping::Fragments);
    Ok(greedy_match(&gt_counts, &pred_counts, &inter, pred))
}

fn penalty(radius: f64) -> MetricValue {
    MetricValue { iou: 0.0, hd95: 2.0 * radius, assd: radius }
}

fn mean_of(values: &[MetricValue]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let (i, h, a) = values
        .iter()
        .fold((0.0, 0.0, 0.0), |(i, h, a), v| (i + v.iou, h + v.hd95, a + v.assd));
    (i / n, h / n, a / n)
}

/// Fragment scores averaged (unweighted) over all ground-truth fragments.
pub fn evaluate_fragments<F: LabelField + ?Sized>(gt: &F, pred: &F) -> Result<FragmentEvaluation> {
    check_grids(gt, pred)?;
    let gs = grouped_surfaces(gt, BitGrouping::Fragments);
    let ps = grouped_surfaces(pred, BitGrouping::Fragments);
    if gs.counts.iter().all(|&c| c == 0) {
        return Err(Error::NoGroundTruth);
    }
    let inter = overlaps(gt, pred, BitGrouping::Fragments);
    let matching = greedy_match(&gs.counts, &ps.counts, &inter, pred);

    let mut per_fragment = Vec::with_capacity(matching.matches.len());
    for m in &matching.matches {
        let g = m.gt_label.id() as usize - 1;
        let value = match m.pred_label {
            Some(p) => {
                let d = SurfaceDistances::compute(&ps.surfaces[p.id() as usize - 1], &gs.surfaces[g])?;
                MetricValue { iou: m.iou, hd95: d.hd95(), assd: d.assd() }
            }
            None => penalty(gs.bounding_sphere(gt, g).expect("fragment present").radius),
        };
        per_fragment.push(value);
    }
    let (iou_f, hd95_f, assd_f) = mean_of(&per_fragment);
    Ok(FragmentEvaluation {
        iou_f,
        hd95_f,
        assd_f,
        fp_count: matching.unmatched_pred.len(),
        matching,
        per_fragment,
    })
}

/// Bone-level scores after merging fragments, averaged over bones present in
/// the ground truth.
pub fn evaluate_anatomy<F: LabelField + ?Sized>(gt: &F, pred: &F) -> Result<AnatomyEvaluation> {
    check_grids(gt, pred)?;
    let gs = grouped_surfaces(gt, BitGrouping::Anatomy);
    let ps = grouped_surfaces(pred, BitGrouping::Anatomy);
    if gs.counts.iter().all(|&c| c == 0) {
        return Err(Error::NoGroundTruth);
    }
    let inter = overlaps(gt, pred, BitGrouping::Anatomy);

    let mut per_bone = Vec::new();
    for anatomy in AnatomyClass::ALL {
        let a = anatomy.code() as usize;
        if gs.counts[a] == 0 {
            continue;
        }
        let value = if ps.counts[a] == 0 {
            penalty(gs.bounding_sphere(gt, a).expect("bone present").radius)
        } else {
            let i = inter[a * 3 + a];
            let d = SurfaceDistances::compute(&ps.surfaces[a], &gs.surfaces[a])?;
            MetricValue {
                iou: iou_from_counts(i, gs.counts[a] + ps.counts[a] - i),
                hd95: d.hd95(),
                assd: d.assd(),
            }
        };
        per_bone.push((anatomy, value));
    }
    let values: Vec<MetricValue> = per_bone.iter().map(|(_, v)| *v).collect();
    let (iou_a, hd95_a, assd_a) = mean_of(&values);
    Ok(AnatomyEvaluation { iou_a, hd95_a, assd_a, per_bone })
}

/// Scores one prediction against its ground truth.
pub fn evaluate_labels<F: LabelField + ?Sized>(
    gt: &F,
    pred: &F,
    runtime_s: Option<f64>,
) -> Result<CaseMetrics> {
    let f = evaluate_fragments(gt, pred)?;
    let a = evaluate_anatomy(gt, pred)?;
    Ok(CaseMetrics {
        iou_f: f.iou_f,
        hd95_f: f.hd95_f,
        assd_f: f.assd_f,
        iou_a: a.iou_a,
        hd95_a: a.hd95_a,
        assd_a: a.assd_a,
        fp_count: f.fp_count,
        runtime_s,
    })
}

/// A case's labels: a CT label volume or a projected X-ray mask.
#[derive(Debug, Clone, Copy)]
pub enum CaseLabels<'a> {
    Volume(&'a LabelVolume),
    Projection(&'a MultiLabelMask2D),
}

impl<'a> From<&'a LabelVolume> for CaseLabels<'a> {
    fn from(v: &'a LabelVolume) -> Self {
        Self::Volume(v)
    }
}

impl<'a> From<&'a MultiLabelMask2D> for CaseLabels<'a> {
    fn from(m: &'a MultiLabelMask2D) -> Self {
        Self::Projection(m)
    }
}

pub fn evaluate_case(gt: CaseLabels<'_>, pred: CaseLabels<'_>, runtime_s: Option<f64>) -> Result<CaseMetrics> {
    match (gt, pred) {
        (CaseLabels::Volume(g), CaseLabels::Volume(p)) => evaluate_labels(g, p, runtime_s),
        (CaseLabels::Projection(g), CaseLabels::Projection(p)) => evaluate_labels(g, p, runtime_s),
        _ => Err(Error::KindMismatch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;
    use alloc::vec;

    fn grid(n: [usize; 3]) -> Grid {
        Grid::new(n, [1.0; 3], [0.0; 3]).unwrap()
    }

    fn lbl(id: u32) -> FragmentLabel {
        decode_label(id).unwrap()
    }

    #[test]
    fn identity_matches_itself() {
        let v = LabelVolume::new(grid([6, 1, 1]), vec![1, 1, 2, 0, 11, 21]).unwrap();
        let m = match_fragments(&v, &v).unwrap();
        assert!(m.unmatched_pred.is_empty());
        for fm in &m.matches {
            assert_eq!(fm.pred_label, Some(fm.gt_label));
            assert_eq!(fm.iou, 1.0);
        }
        let c = evaluate_case((&v).into(), (&v).into(), None).unwrap();
        assert_eq!((c.iou_f, c.hd95_f, c.assd_f, c.fp_count), (1.0, 0.0, 0.0, 0));
        assert_eq!((c.iou_a, c.hd95_a, c.assd_a), (1.0, 0.0, 0.0));
    }

    #[test]
    fn larger_gt_claims_shared_prediction() {
        // GT: 11 has 4 voxels, 12 has 2. Pred 11 covers all of them.
        let gt = LabelVolume::new(grid([7, 1, 1]), vec![11, 11, 11, 11, 12, 12, 0]).unwrap();
        let pred = LabelVolume::new(grid([7, 1, 1]), vec![11, 11, 11, 11, 11, 11, 0]).unwrap();
        let m = match_fragments(&gt, &pred).unwrap();
        assert_eq!(m.matches[0].pred_label, Some(lbl(11)));
        assert_eq!(m.matches[0].iou, 4.0 / 6.0);
        assert_eq!(m.matches[1].pred_label, None);

        // Exhaustive over the two possible one-to-one assignments: giving the
        // prediction to the larger fragment maximizes summed IoU.
        let big = 4.0 / 6.0;
        let small = 2.0 / 6.0;
        assert!(big > small);
    }

    #[test]
    fn zero_overlap_prediction_is_false_positive() {
        let gt = LabelVolume::new(grid([4, 1, 1]), vec![1, 1, 0, 0]).unwrap();
        let pred = LabelVolume::new(grid([4, 1, 1]), vec![0, 0, 0, 2]).unwrap();
        let f = evaluate_fragments(&gt, &pred).unwrap();
        assert_eq!(f.fp_count, 1);
        assert_eq!(f.matching.unmatched_pred, vec![lbl(2)]);
        assert_eq!(f.matching.matches[0].pred_label, None);
    }

    #[test]
    fn cross_bone_overlap_is_not_matched() {
        let gt = LabelVolume::new(grid([2, 1, 1]), vec![1, 1]).unwrap();
        let pred = LabelVolume::new(grid([2, 1, 1]), vec![11, 11]).unwrap();
        let f = evaluate_fragments(&gt, &pred).unwrap();
        assert_eq!(f.fp_count, 1);
        assert_eq!(f.iou_f, 0.0);
    }

    #[test]
    fn missing_fragment_penalty() {
        let gt = LabelVolume::new(grid([3, 2, 2]), {
            let mut v = vec![0u8; 12];
            v[0] = 1;
            v[1] = 1;
            v
        })
        .unwrap();
        let pred = LabelVolume::zeros(*gt.grid());
        let f = evaluate_fragments(&gt, &pred).unwrap();
        let r = libm::sqrt(6.0) / 2.0;
        assert_eq!(f.iou_f, 0.0);
        assert!((f.hd95_f - 2.0 * r).abs() < 1e-12);
        assert!((f.assd_f - r).abs() < 1e-12);
        assert_eq!(f.fp_count, 0);
    }

    #[test]
    fn permuted_indices_keep_metrics() {
        let gt = LabelVolume::new(grid([8, 1, 1]), vec![11, 11, 11, 12, 12, 13, 0, 1]).unwrap();
        let pred = LabelVolume::new(grid([8, 1, 1]), vec![13, 13, 13, 11, 11, 12, 0, 1]).unwrap();
        let a = evaluate_labels(&gt, &gt, None).unwrap();
        let b = evaluate_labels(&gt, &pred, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_sacrum_anatomy() {
        let gt = LabelVolume::new(grid([5, 1, 1]), vec![1, 0, 11, 0, 21]).unwrap();
        let pred = LabelVolume::new(grid([5, 1, 1]), vec![0, 0, 11, 0, 21]).unwrap();
        let a = evaluate_anatomy(&gt, &pred).unwrap();
        let r = libm::sqrt(3.0) / 2.0;
        assert_eq!(a.iou_a, (0.0 + 1.0 + 1.0) / 3.0);
        assert!((a.hd95_a - 2.0 * r / 3.0).abs() < 1e-12);
        assert!((a.assd_a - r / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let empty = LabelVolume::zeros(grid([2, 2, 2]));
        assert_eq!(evaluate_fragments(&empty, &empty).unwrap_err(), Error::NoGroundTruth);
        let other = LabelVolume::zeros(grid([2, 2, 3]));
        assert!(matches!(match_fragments(&empty, &other), Err(Error::GridMismatch(_))));
        let m = MultiLabelMask2D::zeros(2, 2);
        assert_eq!(
            evaluate_case((&empty).into(), (&m).into(), None).unwrap_err(),
            Error::KindMismatch
        );
    }

    #[test]
    fn spurious_bitplane_counts_as_false_positive() {
        let gt = MultiLabelMask2D::new(3, 1, vec![1, 1, 0]).unwrap();
        let pred = MultiLabelMask2D::new(3, 1, vec![1, 1 | 1 << 1, 1 << 1]).unwrap();
        let c = evaluate_case((&gt).into(), (&pred).into(), Some(2.0)).unwrap();
        assert_eq!(c.fp_count, 1);
        assert_eq!(c.iou_f, 1.0);
        assert_eq!(c.runtime_s, Some(2.0));
    }
}
