//! Spectral forward projection and label projection.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::camera::CameraGeometry;
use super::material::{MaterialId, MaterialVolume};
use super::raycast::{clip_to_box, nearest_index, trilinear_by_material, walk_fixed_step, walk_voxels};
use super::spectrum::{AttenuationTable, Spectrum};
use crate::error::{Error, Result};
use crate::taxonomy::MAX_LABEL_ID;
use crate::volume::{Grid, LabelField, LabelVolume, MultiLabelMask2D};

/// How line integrals are accumulated along each ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    /// Midpoint sampling every `step_factor × min voxel spacing`; each
    /// material's density is interpolated trilinearly on its own.
    FixedStep { step_factor: f64 },
    /// Exact chord lengths through every crossed voxel.
    Siddon,
}

impl Default for Integrator {
    fn default() -> Self {
        Self::FixedStep { step_factor: 0.25 }
    }
}

impl Integrator {
    fn step_mm(&self, grid: &Grid) -> Result<Option<f64>> {
        match *self {
            Self::FixedStep { step_factor } if step_factor > 0.0 && step_factor.is_finite() => {
                Ok(Some(step_factor * grid.min_spacing()))
            }
            Self::FixedStep { .. } => Err(Error::InvalidParameter("step factor must be positive")),
            Self::Siddon => Ok(None),
        }
    }
}

/// Detector image, row-major (`index = i + width * j`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Per-energy transmitted fractions `T(E, u)`, `[bin][pixel]`, kept from
    /// the forward projection for photon statistics.
    pub transmission: Option<Vec<Vec<f64>>>,
}

impl ProjectionImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidGrid("pixel count does not match dims"));
        }
        Ok(Self { width, height, values, transmission: None })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, values: vec![value; width * height], transmission: None }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i + self.width * j]
    }

    /// Spectrum-weighted transmission `Σ_E w(E) T(E, u)` when available.
    pub fn primary(&self, spectrum: &Spectrum) -> Option<Vec<f64>> {
        let t = self.transmission.as_ref()?;
        if t.len() != spectrum.len() {
            return None;
        }
        let mut p = vec![0.0; self.values.len()];
        for (bin, fractions) in spectrum.bins().iter().zip(t) {
            for (acc, f) in p.iter_mut().zip(fractions) {
                *acc += bin.weight * f;
            }
        }
        Some(p)
    }
}

/// Per-pixel material path integrals `∫ρ_m dℓ` in g/cm², `[pixel][material]`.
pub fn material_path_integrals(
    mat: &MaterialVolume,
    cam: &CameraGeometry,
    integrator: Integrator,
) -> Result<Vec<[f64; 3]>> {
    cam.validate()?;
    let grid = *mat.grid();
    let step = integrator.step_mm(&grid)?;
    let (lo, hi) = grid.bounds();
    let materials = mat.materials();
    let densities = mat.densities();
    let (w, h) = (cam.width(), cam.height());
    let mut out = vec![[0.0f64; 3]; w * h];

    for j in 0..h {
        for i in 0..w {
            let dir = cam.ray_direction(i, j);
            let pixel_dist = super::camera::norm(super::camera::sub(cam.pixel_center(i, j), cam.source));
            let Some((t0, t1)) = clip_to_box(lo, hi, cam.source, dir) else {
                continue;
            };
            let span = (t0, t1.min(pixel_dist));
            if span.1 <= span.0 {
                continue;
            }
            let mut acc = [0.0f64; 3];
            match step {
                Some(step) => walk_fixed_step(&grid, cam.source, dir, span, step, |c, len| {
                    let rho = trilinear_by_material(&grid, materials, densities, c);
                    for (a, r) in acc.iter_mut().zip(rho) {
                        *a += r * len;
                    }
                }),
                None => walk_voxels(&grid, cam.source, dir, span, |v, len| {
                    acc[materials[v] as usize] += densities[v] as f64 * len;
                }),
            }
            // mm → cm
            out[i + w * j] = acc.map(|a| a * 0.1);
        }
    }
    Ok(out)
}

/// Polychromatic Beer-Lambert projection normalized so that an unattenuated
/// ray reads 1.
pub fn forward_project(
    mat: &MaterialVolume,
    spectrum: &Spectrum,
    attenuation: &AttenuationTable,
    cam: &CameraGeometry,
    integrator: Integrator,
) -> Result<ProjectionImage> {
    let mu = attenuation.for_spectrum(spectrum)?;
    let paths = material_path_integrals(mat, cam, integrator)?;
    let n = paths.len();
    let mut values = vec![0.0; n];
    let mut transmission = vec![vec![0.0; n]; spectrum.len()];
    for (b, (bin, coeff)) in spectrum.bins().iter().zip(&mu).enumerate() {
        for (p, path) in paths.iter().enumerate() {
            let exponent = coeff[MaterialId::Air as usize] * path[0]
                + coeff[MaterialId::SoftTissue as usize] * path[1]
                + coeff[MaterialId::Bone as usize] * path[2];
            let t = libm::exp(-exponent);
            transmission[b][p] = t;
            values[p] += bin.weight * t;
        }
    }
    Ok(ProjectionImage {
        width: cam.width(),
        height: cam.height(),
        values,
        transmission: Some(transmission),
    })
}

/// Default minimum chord length (mm) for a fragment to mark a pixel.
pub const DEFAULT_MIN_PATH_MM: f64 = 1.0;

/// Projects a label volume through the same camera: a label's bit is set at
/// a pixel when the ray's accumulated length inside that fragment reaches
/// `min_path_mm`.
pub fn project_labels(
    labels: &LabelVolume,
    cam: &CameraGeometry,
    min_path_mm: f64,
    integrator: Integrator,
) -> Result<MultiLabelMask2D> {
    cam.validate()?;
    let grid = *labels.grid();
    let step = integrator.step_mm(&grid)?;
    let (w, h) = (cam.width(), cam.height());
    let mut mask = MultiLabelMask2D::zeros(w, h);
    let Some((lo, hi)) = foreground_bounds(labels) else {
        return Ok(mask);
    };
    let voxels = labels.voxels();
    let mut pixels = vec![0u32; w * h];
    let mut lengths = [0.0f64; MAX_LABEL_ID as usize + 1];

    for j in 0..h {
        for i in 0..w {
            let dir = cam.ray_direction(i, j);
            let Some(span) = clip_to_box(lo, hi, cam.source, dir) else {
                continue;
            };
            let mut touched = 0u32;
            match step {
                Some(step) => walk_fixed_step(&grid, cam.source, dir, span, step, |c, len| {
                    let id = voxels[nearest_index(&grid, c)];
                    lengths[id as usize] += len;
                    touched |= 1 << id;
                }),
                None => walk_voxels(&grid, cam.source, dir, span, |v, len| {
                    let id = voxels[v];
                    lengths[id as usize] += len;
                    touched |= 1 << id;
                }),
            }
            let mut bits = 0u32;
            let mut rest = touched & !1;
            while rest != 0 {
                let id = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                if lengths[id] >= min_path_mm {
                    bits |= 1 << (id - 1);
                }
            }
            let mut rest = touched;
            while rest != 0 {
                lengths[rest.trailing_zeros() as usize] = 0.0;
                rest &= rest - 1;
            }
            pixels[i + w * j] = bits;
        }
    }
    mask = MultiLabelMask2D::new(w, h, pixels)?;
    Ok(mask)
}

/// Physical box of all labelled voxels (full voxel extents).
fn foreground_bounds(labels: &LabelVolume) -> Option<([f64; 3], [f64; 3])> {
    let grid = labels.grid();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (idx, _) in labels.voxels().iter().enumerate().filter(|(_, &v)| v != 0) {
        any = true;
        let c = grid.coords(idx);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    any.then(|| {
        let mut plo = [0.0; 3];
        let mut phi = [0.0; 3];
        for a in 0..3 {
            plo[a] = grid.offset[a] + lo[a] as f64 * grid.spacing[a];
            phi[a] = grid.offset[a] + (hi[a] + 1) as f64 * grid.spacing[a];
        }
        (plo, phi)
    })
}
