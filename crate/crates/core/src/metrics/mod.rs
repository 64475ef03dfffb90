//! Overlap and surface-distance metrics.
//!
//! Surfaces are the physical centers of boundary cells: foreground cells with
//! at least one face neighbour (6 in 3D, 4 in 2D) that is background or lies
//! outside the grid. Distances are Euclidean in millimetres (pixels for
//! planar grids).

mod kdtree;
mod surface;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid};

pub use kdtree::KdTree;
pub(crate) use surface::{grouped_surfaces, BitGrouping};

pub type Point = [f64; 3];

/// Percentile used for the robust Hausdorff distance.
pub const HD_PERCENTILE: f64 = 95.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfacePointSet {
    pub points: Vec<Point>,
}

impl SurfacePointSet {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// IoU, HD95 and ASSD for one pair of masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub iou: f64,
    pub hd95: f64,
    pub assd: f64,
}

fn check_grids(a: &Grid, b: &Grid) -> Result<()> {
    if a.matches(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch("masks are defined on different grids"))
    }
}

/// `|a ∩ b| / |a ∪ b|`; two empty masks agree perfectly (1.0).
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_grids(a.grid(), b.grid())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.cells().iter().zip(b.cells()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(iou_from_counts(inter, union))
}

#[inline]
pub(crate) fn iou_from_counts(inter: usize, union: usize) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Boundary-cell centers of a mask, in raster order.
pub fn extract_surface(mask: &BinaryMask) -> SurfacePointSet {
    let grid = mask.grid();
    let cells = mask.cells();
    let mut nb = [0usize; 6];
    let mut points = Vec::new();
    for (i, _) in cells.iter().enumerate().filter(|(_, &c)| c) {
        let c = grid.coords(i);
        let (n, border) = grid.face_neighbors(c, &mut nb);
        if border || nb[..n].iter().any(|&j| !cells[j]) {
            points.push(grid.center(c));
        }
    }
    SurfacePointSet { points }
}

/// Directed nearest-surface distances in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceDistances {
    /// For each predicted point, distance to the nearest ground-truth point.
    pub forward: Vec<f64>,
    /// For each ground-truth point, distance to the nearest predicted point.
    pub backward: Vec<f64>,
}

impl SurfaceDistances {
    pub fn compute(cp: &SurfacePointSet, cg: &SurfacePointSet) -> Result<Self> {
        if cp.is_empty() || cg.is_empty() {
            return Err(Error::EmptySurface);
        }
        let tp = KdTree::new(&cp.points);
        let tg = KdTree::new(&cg.points);
        let directed = |from: &[Point], tree: &KdTree| -> Vec<f64> {
            from.iter().map(|p| libm::sqrt(tree.nearest_sq(p))).collect()
        };
        Ok(Self {
            forward: directed(&cp.points, &tg),
            backward: directed(&cg.points, &tp),
        })
    }

    /// Larger of the two directed 95th percentiles.
    pub fn hd95(&self) -> f64 {
        let p = |d: &[f64]| {
            let mut s = d.to_vec();
            s.sort_unstable_by(f64::total_cmp);
            percentile_linear(&s, HD_PERCENTILE)
        };
        p(&self.forward).max(p(&self.backward))
    }

    pub fn assd(&self) -> f64 {
        let total: f64 = self.forward.iter().sum::<f64>() + self.backward.iter().sum::<f64>();
        total / (self.forward.len() + self.backward.len()) as f64
    }

    /// Largest directed distance in either direction (plain Hausdorff).
    pub fn hausdorff(&self) -> f64 {
        self.forward.iter().chain(&self.backward).copied().fold(0.0, f64::max)
    }
}

/// Percentile of an ascending slice by linear interpolation between closest
/// ranks (position `q/100 * (n-1)`).
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

pub fn hd95(cp: &SurfacePointSet, cg: &SurfacePointSet) -> Result<f64> {
    Ok(SurfaceDistances::compute(cp, cg)?.hd95())
}

pub fn assd(cp: &SurfacePointSet, cg: &SurfacePointSet) -> Result<f64> {
    Ok(SurfaceDistances::compute(cp, cg)?.assd())
}

/// All three metrics for a pair of non-empty masks.
pub fn mask_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricValue> {
    let iou = iou(pred, gt)?;
    let d = SurfaceDistances::compute(&extract_surface(pred), &extract_surface(gt))?;
    Ok(MetricValue { iou, hd95: d.hd95(), assd: d.assd() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingSphere {
    pub center: Point,
    pub radius: f64,
}

impl BoundingSphere {
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// Sphere circumscribing the cell-index box `[lo, hi]` (inclusive) with
    /// full cell extents.
    pub(crate) fn from_cell_box(grid: &Grid, lo: [usize; 3], hi: [usize; 3]) -> Self {
        let axes = if grid.planar { 2 } else { 3 };
        let mut center = [0.0; 3];
        let mut diag_sq = 0.0;
        for a in 0..axes {
            let min = grid.offset[a] + lo[a] as f64 * grid.spacing[a];
            let max = grid.offset[a] + (hi[a] + 1) as f64 * grid.spacing[a];
            center[a] = 0.5 * (min + max);
            diag_sq += (max - min) * (max - min);
        }
        Self { center, radius: 0.5 * libm::sqrt(diag_sq) }
    }
}

/// Sphere through the corners of the mask's tight physical bounding box.
pub fn bounding_sphere(mask: &BinaryMask) -> Result<BoundingSphere> {
    let grid = mask.grid();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (i, _) in mask.cells().iter().enumerate().filter(|(_, &c)| c) {
        any = true;
        let c = grid.coords(i);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    Ok(BoundingSphere::from_cell_box(grid, lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid(n: [usize; 3], s: f64) -> Grid {
        Grid::new(n, [s; 3], [0.0; 3]).unwrap()
    }

    fn block(g: Grid, lo: [usize; 3], hi: [usize; 3]) -> BinaryMask {
        let mut m = BinaryMask::empty(g);
        for z in lo[2]..hi[2] {
            for y in lo[1]..hi[1] {
                for x in lo[0]..hi[0] {
                    m.set(x, y, z, true);
                }
            }
        }
        m
    }

    fn pts(p: &[Point]) -> SurfacePointSet {
        SurfacePointSet::new(p.to_vec())
    }

    #[test]
    fn iou_examples() {
        let g = grid([4, 4, 4], 1.0);
        let a = block(g, [0, 0, 0], [2, 2, 1]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let far = block(g, [3, 3, 3], [4, 4, 4]);
        assert_eq!(iou(&a, &far).unwrap(), 0.0);
        let shifted = block(g, [1, 0, 0], [3, 2, 1]);
        assert_eq!(iou(&a, &shifted).unwrap(), 2.0 / 6.0);
        assert_eq!(iou(&BinaryMask::empty(g), &BinaryMask::empty(g)).unwrap(), 1.0);
        assert_eq!(iou(&a, &BinaryMask::empty(g)).unwrap(), 0.0);
    }

    #[test]
    fn iou_grid_mismatch() {
        let a = BinaryMask::empty(grid([2, 2, 2], 1.0));
        let b = BinaryMask::empty(grid([2, 2, 2], 2.0));
        assert!(matches!(iou(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn surface_examples() {
        let g = grid([5, 5, 5], 1.0);
        let one = block(g, [2, 2, 2], [3, 3, 3]);
        assert_eq!(extract_surface(&one).points, vec![[2.5, 2.5, 2.5]]);
        let cube = block(g, [1, 1, 1], [4, 4, 4]);
        let s = extract_surface(&cube);
        assert_eq!(s.len(), 26);
        assert!(!s.points.contains(&[2.5, 2.5, 2.5]));
        assert!(extract_surface(&BinaryMask::empty(g)).is_empty());
    }

    #[test]
    fn planar_surface_uses_four_neighbours() {
        let g = Grid::planar(5, 5);
        let sq = block(g, [1, 1, 0], [4, 4, 1]);
        let s = extract_surface(&sq);
        assert_eq!(s.len(), 8);
        assert!(s.points.iter().all(|p| p[2] == 0.0));
    }

    #[test]
    fn hd95_examples() {
        let a = pts(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert_eq!(hd95(&a, &a).unwrap(), 0.0);
        assert_eq!(hd95(&pts(&[[0.0; 3]]), &pts(&[[3.0, 0.0, 0.0]])).unwrap(), 3.0);

        let mut p: Vec<Point> = (0..20).map(|i| [i as f64 * 100.0, 0.0, 0.0]).collect();
        let mut g = p.clone();
        p.push([5000.0, 0.0, 0.0]);
        g.push([5000.0, 10.0, 0.0]);
        assert_eq!(hd95(&pts(&p), &pts(&g)).unwrap(), 0.0);
        assert!(matches!(hd95(&pts(&[]), &a), Err(Error::EmptySurface)));
    }

    #[test]
    fn assd_examples() {
        let a = pts(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert_eq!(assd(&a, &a).unwrap(), 0.0);
        assert_eq!(assd(&pts(&[[0.0; 3]]), &pts(&[[3.0, 0.0, 0.0]])).unwrap(), 3.0);
        assert_eq!(assd(&a, &pts(&[[0.0; 3]])).unwrap(), 1.0 / 3.0);
        assert!(matches!(assd(&a, &pts(&[])), Err(Error::EmptySurface)));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 10.0];
        assert_eq!(percentile_linear(&v, 95.0), 9.5);
        assert_eq!(percentile_linear(&[4.0], 95.0), 4.0);
        assert_eq!(percentile_linear(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0), 3.0);
    }

    #[test]
    fn bounding_sphere_examples() {
        let g = grid([4, 4, 4], 1.0);
        let one = block(g, [1, 1, 1], [2, 2, 2]);
        let s = bounding_sphere(&one).unwrap();
        assert!((s.radius - libm::sqrt(3.0) / 2.0).abs() < 1e-12);
        assert_eq!(s.center, [1.5, 1.5, 1.5]);

        let two = block(g, [0, 0, 0], [2, 1, 1]);
        let r1 = bounding_sphere(&two).unwrap().radius;
        assert!((r1 - libm::sqrt(6.0) / 2.0).abs() < 1e-12);

        let two_coarse = block(grid([4, 4, 4], 2.0), [0, 0, 0], [2, 1, 1]);
        assert!((bounding_sphere(&two_coarse).unwrap().radius - 2.0 * r1).abs() < 1e-12);
        assert_eq!(bounding_sphere(&BinaryMask::empty(g)), Err(Error::EmptyMask));
    }

    #[test]
    fn assd_bounded_by_hausdorff() {
        let a = pts(&[[0.0; 3], [1.0, 0.0, 0.0], [7.0, 2.0, 0.0]]);
        let b = pts(&[[0.5, 0.0, 0.0], [3.0, 3.0, 3.0]]);
        let d = SurfaceDistances::compute(&a, &b).unwrap();
        assert!(d.assd() <= d.hausdorff());
    }
}
