//! Ray traversal through a voxel grid.

use super::camera::Vec3;
use super::material::MaterialId;
use crate::volume::Grid;

/// Parametric interval `[t0, t1]` (t ≥ 0) where `origin + t * dir` lies
/// inside the box `[lo, hi]`.
pub(crate) fn clip_to_box(lo: Vec3, hi: Vec3, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
        } else {
            let inv = 1.0 / dir[a];
            let mut ta = (lo[a] - origin[a]) * inv;
            let mut tb = (hi[a] - origin[a]) * inv;
            if ta > tb {
                core::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
    }
    (t1 > t0).then_some((t0, t1))
}

/// Midpoint samples every `≈ step` millimetres along `[t0, t1]`.
///
/// The interval is divided into `ceil(len / step)` equal segments; `visit`
/// receives each segment midpoint in continuous voxel coordinates (voxel
/// `i` centered at `i`) and the segment length.
#[inline]
pub(crate) fn walk_fixed_step<F: FnMut([f64; 3], f64)>(
    grid: &Grid,
    origin: Vec3,
    dir: Vec3,
    (t0, t1): (f64, f64),
    step: f64,
    mut visit: F,
) {
    let len = t1 - t0;
    let n = libm::ceil(len / step).max(1.0) as usize;
    let h = len / n as f64;
    for k in 0..n {
        let t = t0 + (k as f64 + 0.5) * h;
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = (origin[a] + dir[a] * t - grid.offset[a]) / grid.spacing[a] - 0.5;
        }
        visit(c, h);
    }
}

/// Exact voxel traversal (incremental Siddon / Amanatides-Woo): `visit`
/// receives each crossed voxel's linear index and the chord length inside it.
#[inline]
pub(crate) fn walk_voxels<F: FnMut(usize, f64)>(
    grid: &Grid,
    origin: Vec3,
    dir: Vec3,
    (t0, t1): (f64, f64),
    mut visit: F,
) {
    let mut voxel = [0isize; 3];
    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let t_probe = t0 + (0.5 * (t1 - t0)).min(1e-7);
    for a in 0..3 {
        let n = grid.dims[a] as isize;
        // Locate the entry voxel slightly inside the interval so boundary
        // round-off does not pick the neighbour outside.
        let probe = origin[a] + dir[a] * t_probe;
        let v = libm::floor((probe - grid.offset[a]) / grid.spacing[a]) as isize;
        voxel[a] = v.clamp(0, n - 1);
        if dir[a] > 0.0 {
            step[a] = 1;
            let boundary = grid.offset[a] + (voxel[a] + 1) as f64 * grid.spacing[a];
            t_max[a] = (boundary - origin[a]) / dir[a];
            t_delta[a] = grid.spacing[a] / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            let boundary = grid.offset[a] + voxel[a] as f64 * grid.spacing[a];
            t_max[a] = (boundary - origin[a]) / dir[a];
            t_delta[a] = -grid.spacing[a] / dir[a];
        }
    }
    let (nx, ny, nz) = (grid.dims[0] as isize, grid.dims[1] as isize, grid.dims[2] as isize);
    let mut t = t0;
    loop {
        let a = if t_max[0] <= t_max[1] {
            if t_max[0] <= t_max[2] { 0 } else { 2 }
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        let t_next = t_max[a].min(t1);
        let len = t_next - t;
        if len > 0.0 {
            let idx = voxel[0] + nx * (voxel[1] + ny * voxel[2]);
            visit(idx as usize, len);
            t = t_next;
        }
        if t_max[a] >= t1 {
            break;
        }
        voxel[a] += step[a];
        if voxel[a] < 0 || voxel[a] >= [nx, ny, nz][a] {
            break;
        }
        t_max[a] += t_delta[a];
    }
}

/// Clamp-to-edge linear interpolation weights along one axis.
#[inline]
pub(crate) fn axis_lerp(c: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let cf = c.clamp(0.0, (n - 1) as f64);
    let i0 = (libm::floor(cf) as usize).min(n - 2);
    (i0, i0 + 1, cf - i0 as f64)
}

/// Nearest voxel (clamped) to a continuous voxel coordinate.
#[inline]
pub(crate) fn nearest_index(grid: &Grid, c: [f64; 3]) -> usize {
    let mut v = [0usize; 3];
    for a in 0..3 {
        let r = libm::round(c[a]).clamp(0.0, (grid.dims[a] - 1) as f64);
        v[a] = r as usize;
    }
    grid.index(v[0], v[1], v[2])
}

/// Trilinear interpolation of each material's density channel: a voxel
/// contributes its density to its own material only.
#[inline]
pub(crate) fn trilinear_by_material(grid: &Grid, materials: &[MaterialId], densities: &[f32], c: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for_each_corner(grid, c, |i, w| out[materials[i] as usize] += w * densities[i] as f64);
    out
}

#[inline]
fn for_each_corner(grid: &Grid, c: [f64; 3], mut f: impl FnMut(usize, f64)) {
    let (x0, x1, fx) = axis_lerp(c[0], grid.dims[0]);
    let (y0, y1, fy) = axis_lerp(c[1], grid.dims[1]);
    let (z0, z1, fz) = axis_lerp(c[2], grid.dims[2]);
    for (z, wz) in [(z0, 1.0 - fz), (z1, fz)] {
        for (y, wy) in [(y0, 1.0 - fy), (y1, fy)] {
            for (x, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                let w = wx * wy * wz;
                if w != 0.0 {
                    f(grid.index(x, y, z), w);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn grid() -> Grid {
        Grid::new([4, 3, 2], [1.0, 2.0, 0.5], [-2.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn voxel_walk_sums_to_chord_length() {
        let g = grid();
        let (lo, hi) = g.bounds();
        let origin = [-10.0, -7.0, 0.3];
        let target = [3.0, 7.0, 1.9];
        let d = super::super::camera::normalize(super::super::camera::sub(target, origin));
        let span = clip_to_box(lo, hi, origin, d).unwrap();
        let mut total = 0.0;
        let mut seen = Vec::new();
        walk_voxels(&g, origin, d, span, |i, l| {
            total += l;
            seen.push(i);
        });
        assert!((total - (span.1 - span.0)).abs() < 1e-12);
        assert!(seen.iter().all(|&i| i < g.len()));
        let mut fixed = 0.0;
        walk_fixed_step(&g, origin, d, span, 0.1, |_, h| fixed += h);
        assert!((fixed - (span.1 - span.0)).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_ray_visits_one_column() {
        let g = grid();
        let (lo, hi) = g.bounds();
        let origin = [-1.5, -5.0, 1.25];
        let span = clip_to_box(lo, hi, origin, [0.0, 1.0, 0.0]).unwrap();
        let mut seen = Vec::new();
        walk_voxels(&g, origin, [0.0, 1.0, 0.0], span, |i, l| seen.push((i, l)));
        assert_eq!(seen, alloc::vec![(0, 2.0), (4, 2.0), (8, 2.0)]);
    }

    #[test]
    fn misses_return_none() {
        let g = grid();
        let (lo, hi) = g.bounds();
        assert!(clip_to_box(lo, hi, [-10.0, -10.0, -10.0], [0.0, 0.0, 1.0]).is_none());
        assert!(clip_to_box(lo, hi, [-10.0, 1.0, 1.5], [-1.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn trilinear_reproduces_linear_field() {
        let g = grid();
        let vals: Vec<f32> = (0..g.len()).map(|i| {
            let c = g.coords(i);
            (c[0] + 2 * c[1] + 3 * c[2]) as f32
        }).collect();
        let mut mats = alloc::vec![MaterialId::SoftTissue; g.len()];
        let v = trilinear_by_material(&g, &mats, &vals, [1.25, 0.5, 0.75]);
        assert!((v[1] - (1.25 + 1.0 + 2.25)).abs() < 1e-12);
        assert_eq!((v[0], v[2]), (0.0, 0.0));
        // Splitting the voxels between two materials splits the sum.
        for (i, m) in mats.iter_mut().enumerate() {
            if g.coords(i)[0] >= 2 {
                *m = MaterialId::Bone;
            }
        }
        let w = trilinear_by_material(&g, &mats, &vals, [1.25, 0.5, 0.75]);
        assert!((w[1] + w[2] - v[1]).abs() < 1e-12 && w[1] > 0.0 && w[2] > 0.0);
        assert_eq!(nearest_index(&g, [9.0, -3.0, 0.4]), g.index(3, 0, 0));
    }
}
