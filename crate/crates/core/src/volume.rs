//! Volumetric and projective containers.
//!
//! Cells are stored x-fastest (`index = x + nx * (y + ny * z)`), which is
//! also the MetaImage payload order. A cell's physical center on each axis is
//! `offset + (i + 0.5) * spacing`, in millimetres.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{decode_label, AnatomyClass, FragmentLabel, MAX_LABEL_ID, VALID_BITS};

/// Geometry shared by every cell container.
///
/// A planar grid is a 2D image embedded at `z = 0` with `nz = 1`; it uses
/// 4-connectivity for boundaries and ignores the z extent of its cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub offset: [f64; 3],
    pub planar: bool,
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], offset: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidGrid("spacing components must be positive"));
        }
        if offset.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("offset must be finite"));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::InvalidGrid("cell count overflows"))?;
        Ok(Self { dims, spacing, offset, planar: false })
    }

    /// Pixel grid of a 2D image, unit spacing.
    pub fn planar(width: usize, height: usize) -> Self {
        Self {
            dims: [width, height, 1],
            spacing: [1.0, 1.0, 1.0],
            offset: [0.0; 3],
            planar: true,
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Physical center of a cell. Planar grids report `z = 0`.
    #[inline]
    pub fn center(&self, c: [usize; 3]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = self.offset[a] + (c[a] as f64 + 0.5) * self.spacing[a];
        }
        if self.planar {
            p[2] = 0.0;
        }
        p
    }

    /// Physical bounds `(lo, hi)` of the whole grid.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = self.offset;
        let mut hi = self.offset;
        for a in 0..3 {
            hi[a] += self.dims[a] as f64 * self.spacing[a];
        }
        if self.planar {
            lo[2] = 0.0;
            hi[2] = 0.0;
        }
        (lo, hi)
    }

    pub fn min_spacing(&self) -> f64 {
        let n = if self.planar { 2 } else { 3 };
        self.spacing[..n].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Same cells at the same place.
    pub fn matches(&self, other: &Grid) -> bool {
        self == other
    }

    /// Face neighbours of a cell that lie inside the grid, plus the number of
    /// faces touching the grid border.
    #[inline]
    pub(crate) fn face_neighbors(&self, c: [usize; 3], out: &mut [usize; 6]) -> (usize, bool) {
        let axes = if self.planar { 2 } else { 3 };
        let mut n = 0;
        let mut touches_border = false;
        for a in 0..axes {
            if c[a] == 0 {
                touches_border = true;
            } else {
                let mut d = c;
                d[a] -= 1;
                out[n] = self.index(d[0], d[1], d[2]);
                n += 1;
            }
            if c[a] + 1 >= self.dims[a] {
                touches_border = true;
            } else {
                let mut d = c;
                d[a] += 1;
                out[n] = self.index(d[0], d[1], d[2]);
                n += 1;
            }
        }
        (n, touches_border)
    }
}

/// Any container whose cells carry a set of fragment labels.
///
/// A cell's labels are reported as a bitset with bit `id - 1` set for each
/// label id present. In 3D at most one bit is ever set.
pub trait LabelField {
    fn grid(&self) -> &Grid;
    fn cell_bits(&self, index: usize) -> u32;
}

/// 3D voxel grid of fragment label ids (0 = background).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    grid: Grid,
    voxels: Vec<u8>,
}

impl LabelVolume {
    /// Validates every voxel against the taxonomy.
    pub fn new(grid: Grid, voxels: Vec<u8>) -> Result<Self> {
        if voxels.len() != grid.len() {
            return Err(Error::InvalidGrid("voxel count does not match dims"));
        }
        if let Some(&bad) = voxels.iter().find(|&&v| v > MAX_LABEL_ID) {
            return Err(Error::InvalidLabel(bad as u32));
        }
        Ok(Self { grid, voxels })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { voxels: vec![0; grid.len()], grid }
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<u8> {
        self.voxels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.voxels[self.grid.index(x, y, z)]
    }

    /// Writes one voxel. Values above 30 are rejected.
    pub fn set(&mut self, x: usize, y: usize, z: usize, id: u8) -> Result<()> {
        if id > MAX_LABEL_ID {
            return Err(Error::InvalidLabel(id as u32));
        }
        let i = self.grid.index(x, y, z);
        self.voxels[i] = id;
        Ok(())
    }
}

impl LabelField for LabelVolume {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    fn cell_bits(&self, index: usize) -> u32 {
        match self.voxels[index] {
            0 => 0,
            v => 1 << (v - 1),
        }
    }
}

/// Scalar CT volume in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVolume {
    grid: Grid,
    voxels: Vec<f32>,
}

impl IntensityVolume {
    pub fn new(grid: Grid, voxels: Vec<f32>) -> Result<Self> {
        if voxels.len() != grid.len() {
            return Err(Error::InvalidGrid("voxel count does not match dims"));
        }
        Ok(Self { grid, voxels })
    }

    pub fn filled(grid: Grid, hu: f32) -> Self {
        Self { voxels: vec![hu; grid.len()], grid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [f32] {
        &mut self.voxels
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }
}

/// 2D mask whose pixels hold label bitsets (bit `id - 1` set ⇔ label present).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelMask2D {
    grid: Grid,
    pixels: Vec<u32>,
}

impl MultiLabelMask2D {
    /// Detector resolution of challenge-conformant masks.
    pub const CHALLENGE_SIZE: usize = 448;

    pub fn new(width: usize, height: usize, pixels: Vec<u32>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidGrid("pixel count does not match dims"));
        }
        if let Some(&bad) = pixels.iter().find(|&&p| p & !VALID_BITS != 0) {
            return Err(Error::InvalidLabel(32 - (bad & !VALID_BITS).leading_zeros()));
        }
        Ok(Self { grid: Grid::planar(width, height), pixels })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { grid: Grid::planar(width, height), pixels: vec![0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.grid.dims[0]
    }

    pub fn height(&self) -> usize {
        self.grid.dims[1]
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.pixels[x + self.width() * y]
    }

    pub fn insert(&mut self, x: usize, y: usize, label: FragmentLabel) {
        let w = self.width();
        self.pixels[x + w * y] |= label.bit();
    }

    pub fn is_challenge_conformant(&self) -> bool {
        self.width() == Self::CHALLENGE_SIZE && self.height() == Self::CHALLENGE_SIZE
    }
}

impl LabelField for MultiLabelMask2D {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    fn cell_bits(&self, index: usize) -> u32 {
        self.pixels[index]
    }
}

/// Boolean occupancy on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid,
    cells: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.len() {
            return Err(Error::InvalidGrid("cell count does not match dims"));
        }
        Ok(Self { grid, cells })
    }

    pub fn empty(grid: Grid) -> Self {
        Self { cells: vec![false; grid.len()], grid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [bool] {
        &mut self.cells
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.cells[self.grid.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.grid.index(x, y, z);
        self.cells[i] = value;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }
}

fn mask_where<F: LabelField + ?Sized>(field: &F, bits: u32) -> BinaryMask {
    let grid = *field.grid();
    let cells = (0..grid.len()).map(|i| field.cell_bits(i) & bits != 0).collect();
    BinaryMask { grid, cells }
}

/// Cells carrying `label`. An absent label yields an empty mask.
pub fn fragment_mask<F: LabelField + ?Sized>(field: &F, label: FragmentLabel) -> BinaryMask {
    mask_where(field, label.bit())
}

/// Union of all fragments belonging to one bone.
pub fn anatomy_mask<F: LabelField + ?Sized>(field: &F, anatomy: AnatomyClass) -> BinaryMask {
    mask_where(field, anatomy.bit_mask())
}

/// Per-label cell counts, indexed by `id - 1`.
pub fn label_counts<F: LabelField + ?Sized>(field: &F) -> [usize; 30] {
    let mut counts = [0usize; 30];
    for i in 0..field.grid().len() {
        let mut bits = field.cell_bits(i);
        while bits != 0 {
            counts[bits.trailing_zeros() as usize] += 1;
            bits &= bits - 1;
        }
    }
    counts
}

/// Labels present with their cell counts, ordered by encoded id.
pub fn list_fragments<F: LabelField + ?Sized>(field: &F) -> Vec<(FragmentLabel, usize)> {
    label_counts(field)
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(bit, &c)| (decode_label(bit as u32 + 1).expect("bit < 30"), c))
        .collect()
}
