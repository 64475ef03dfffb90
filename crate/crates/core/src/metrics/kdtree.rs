use alloc::vec::Vec;

use super::Point;

const LEAF_SIZE: usize = 8;

/// Static 3-d tree answering exact nearest-neighbour queries.
///
/// Squared distances are evaluated with the same expression as a plain
/// all-pairs scan, so the reported minimum is bit-identical to brute force.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point>,
    axes: Vec<u8>,
}

#[inline]
pub(crate) fn dist_sq(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn new(points: &[Point]) -> Self {
        let mut points = points.to_vec();
        let mut axes = alloc::vec![0u8; points.len()];
        build(&mut points, &mut axes);
        Self { points, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared distance to the nearest stored point (infinity when empty).
    pub fn nearest_sq(&self, q: &Point) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, self.points.len(), q, &mut best);
        best
    }

    fn search(&self, lo: usize, hi: usize, q: &Point, best: &mut f64) {
        if hi - lo <= LEAF_SIZE {
            for p in &self.points[lo..hi] {
                let d = dist_sq(q, p);
                if d < *best {
                    *best = d;
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = self.axes[mid] as usize;
        let pivot = &self.points[mid];
        let d = dist_sq(q, pivot);
        if d < *best {
            *best = d;
        }
        let diff = q[axis] - pivot[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        if diff * diff < *best {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn build(points: &mut [Point], axes: &mut [u8]) {
    let n = points.len();
    if n <= LEAF_SIZE {
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let mid = n / 2;
    points.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    axes[mid] = axis as u8;
    let (left, rest) = points.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build(left, left_axes);
    build(&mut rest[1..], &mut rest_axes[1..]);
}
