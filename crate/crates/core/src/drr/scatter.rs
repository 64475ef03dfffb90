use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::project::ProjectionImage;
use crate::error::{Error, Result};

/// Low-frequency scatter model: `spr × GaussianBlur(primary)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScatterConfig {
    /// Scatter-to-primary ratio.
    pub spr: f64,
    pub kernel_sigma_px: f64,
}

impl Default for ScatterConfig {
    fn default() -> Self {
        Self { spr: 0.2, kernel_sigma_px: 40.0 }
    }
}

/// Gaussian taps truncated at 3σ and normalized to unit sum.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| libm::exp(-0.5 * (x as f64 / sigma) * (x as f64 / sigma)))
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable convolution with edge replication.
pub(crate) fn convolve_separable(values: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0; values.len()];
    for j in 0..height {
        let row = &values[j * width..(j + 1) * width];
        for i in 0..width {
            let mut acc = 0.0;
            for (t, k) in kernel.iter().enumerate() {
                acc += k * row[clamp(i as isize + t as isize - r, width)];
            }
            rows[i + j * width] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for j in 0..height {
        for i in 0..width {
            let mut acc = 0.0;
            for (t, k) in kernel.iter().enumerate() {
                acc += k * rows[i + clamp(j as isize + t as isize - r, height) * width];
            }
            out[i + j * width] = acc;
        }
    }
    out
}

/// Scatter field to be added pixel-wise to the primary projection.
pub fn estimate_scatter(primary: &ProjectionImage, config: &ScatterConfig) -> Result<ProjectionImage> {
    if !(config.spr >= 0.0) || !(config.kernel_sigma_px >= 0.0) {
        return Err(Error::InvalidParameter("scatter ratio and kernel width must be non-negative"));
    }
    let (w, h) = (primary.width, primary.height);
    if config.spr == 0.0 {
        return Ok(ProjectionImage::filled(w, h, 0.0));
    }
    let blurred = convolve_separable(&primary.values, w, h, &gaussian_kernel(config.kernel_sigma_px));
    ProjectionImage::new(w, h, blurred.into_iter().map(|v| v * config.spr).collect())
}
