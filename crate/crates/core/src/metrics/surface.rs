use alloc::vec;
use alloc::vec::Vec;

use super::{BoundingSphere, Point, SurfacePointSet};
use crate::taxonomy::anatomy_bits;
use crate::volume::LabelField;

/// How a cell's label bitset maps onto the groups being measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BitGrouping {
    /// One group per label id (30 groups, index `id - 1`).
    Fragments,
    /// One group per bone (3 groups, index = anatomy code).
    Anatomy,
}

impl BitGrouping {
    pub(crate) fn groups(self) -> usize {
        match self {
            Self::Fragments => 30,
            Self::Anatomy => 3,
        }
    }

    #[inline]
    fn map(self, bits: u32) -> u32 {
        match self {
            Self::Fragments => bits,
            Self::Anatomy => anatomy_bits(bits),
        }
    }
}

/// Per-group statistics gathered in one raster pass.
#[derive(Debug, Clone)]
pub(crate) struct GroupedSurfaces {
    pub counts: Vec<usize>,
    pub surfaces: Vec<SurfacePointSet>,
    lo: Vec<[usize; 3]>,
    hi: Vec<[usize; 3]>,
}

impl GroupedSurfaces {
    pub(crate) fn bounding_sphere<F: LabelField + ?Sized>(
        &self,
        field: &F,
        group: usize,
    ) -> Option<BoundingSphere> {
        (self.counts[group] > 0)
            .then(|| BoundingSphere::from_cell_box(field.grid(), self.lo[group], self.hi[group]))
    }
}

/// Cell counts, bounding boxes and boundary points of every group at once.
///
/// A cell is on the surface of group `g` when it belongs to `g` and some face
/// neighbour does not (or the cell touches the grid border). Points are
/// emitted in raster order, identical to running `extract_surface` on each
/// group's binary mask.
pub(crate) fn grouped_surfaces<F: LabelField + ?Sized>(
    field: &F,
    grouping: BitGrouping,
) -> GroupedSurfaces {
    let groups = grouping.groups();
    let grid = *field.grid();
    let mut counts = vec![0usize; groups];
    let mut lo = vec![[usize::MAX; 3]; groups];
    let mut hi = vec![[0usize; 3]; groups];
    let mut points: Vec<Vec<Point>> = vec![Vec::new(); groups];
    let mut nb = [0usize; 6];

    for i in 0..grid.len() {
        let bits = grouping.map(field.cell_bits(i));
        if bits == 0 {
            continue;
        }
        let c = grid.coords(i);
        let (n, border) = grid.face_neighbors(c, &mut nb);
        let mut surface = if border { bits } else { 0 };
        for &j in &nb[..n] {
            surface |= bits & !grouping.map(field.cell_bits(j));
        }
        let mut rest = bits;
        while rest != 0 {
            let g = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            counts[g] += 1;
            for a in 0..3 {
                lo[g][a] = lo[g][a].min(c[a]);
                hi[g][a] = hi[g][a].max(c[a]);
            }
            if surface & (1 << g) != 0 {
                points[g].push(grid.center(c));
            }
        }
    }

    GroupedSurfaces {
        counts,
        surfaces: points.into_iter().map(SurfacePointSet::new).collect(),
        lo,
        hi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{bounding_sphere, extract_surface};
    use crate::taxonomy::{decode_label, AnatomyClass};
    use crate::volume::{anatomy_mask, fragment_mask, Grid, LabelVolume, MultiLabelMask2D};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_per_mask_extraction_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::new([9, 7, 6], [0.8, 0.8, 1.1], [1.0, -2.0, 3.0]).unwrap();
        let vox = (0..g.len())
            .map(|_| if rng.random_bool(0.4) { 0 } else { [1u8, 2, 11, 21, 22][rng.random_range(0..5)] })
            .collect();
        let v = LabelVolume::new(g, vox).unwrap();

        let frag = grouped_surfaces(&v, BitGrouping::Fragments);
        for id in 1..=30u32 {
            let m = fragment_mask(&v, decode_label(id).unwrap());
            assert_eq!(frag.surfaces[id as usize - 1], extract_surface(&m));
            assert_eq!(frag.counts[id as usize - 1], m.count());
            assert_eq!(frag.bounding_sphere(&v, id as usize - 1), bounding_sphere(&m).ok());
        }
        let anat = grouped_surfaces(&v, BitGrouping::Anatomy);
        for a in AnatomyClass::ALL {
            let m = anatomy_mask(&v, a);
            assert_eq!(anat.surfaces[a.code() as usize], extract_surface(&m));
        }
    }

    #[test]
    fn matches_per_mask_extraction_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let px = (0..40 * 30).map(|_| rng.random::<u32>() & 0b111 | (rng.random::<u32>() & 0b11) << 10).collect();
        let m2 = MultiLabelMask2D::new(40, 30, px).unwrap();
        let frag = grouped_surfaces(&m2, BitGrouping::Fragments);
        for id in [1u32, 2, 3, 11, 12] {
            let m = fragment_mask(&m2, decode_label(id).unwrap());
            assert_eq!(frag.surfaces[id as usize - 1], extract_surface(&m));
        }
        let anat = grouped_surfaces(&m2, BitGrouping::Anatomy);
        let m = anatomy_mask(&m2, AnatomyClass::LeftHip);
        assert_eq!(anat.surfaces[1], extract_surface(&m));
    }
}
