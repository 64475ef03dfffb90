//! Quantum and electronic detector noise.
//!
//! Random numbers come from ChaCha8 streams keyed by `(seed, row block)`, so
//! any partition of the detector into blocks reproduces the serial result.

use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::project::ProjectionImage;
use super::spectrum::Spectrum;
use crate::error::{Error, Result};

/// Detector rows sharing one random stream.
pub const BLOCK_ROWS: usize = 16;
/// Expected counts above this use a rounded normal approximation.
pub const POISSON_NORMAL_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Expected photons per unattenuated pixel.
    pub photon_fluence: f64,
    /// Read-out noise standard deviation in normalized detector units.
    pub electronic_sigma: f64,
    /// Gaussian correlation length of the read-out noise, in pixels.
    pub electronic_correlation_radius: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { photon_fluence: 1e5, electronic_sigma: 0.002, electronic_correlation_radius: 1.5 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.photon_fluence > 0.0 && self.photon_fluence.is_finite()) {
            return Err(Error::InvalidParameter("photon fluence must be positive"));
        }
        if !(self.electronic_sigma >= 0.0) || !(self.electronic_correlation_radius >= 0.0) {
            return Err(Error::InvalidParameter("electronic noise parameters must be non-negative"));
        }
        Ok(())
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

fn poisson_sample<R: RngCore>(lambda: f64, rng: &mut R) -> f64 {
    if !(lambda > 0.0) {
        0.0
    } else if lambda > POISSON_NORMAL_THRESHOLD {
        let z: f64 = StandardNormal.sample(rng);
        libm::round(lambda + libm::sqrt(lambda) * z).max(0.0)
    } else {
        Poisson::new(lambda).expect("positive finite rate").sample(rng)
    }
}

/// Poisson photon counts for per-pixel expected counts.
pub fn sample_photon_counts(expected: &[f64], width: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; expected.len()];
    let block = BLOCK_ROWS * width.max(1);
    for (b, (src, dst)) in expected.chunks(block).zip(out.chunks_mut(block)).enumerate() {
        let mut rng = block_rng(seed, b);
        for (lambda, count) in src.iter().zip(dst.iter_mut()) {
            *count = poisson_sample(*lambda, &mut rng);
        }
    }
    out
}

/// Unit-L2-norm Gaussian taps of standard deviation `radius`, truncated at 3σ.
fn unit_norm_kernel(radius: f64) -> Vec<f64> {
    if radius <= 0.0 {
        return vec![1.0];
    }
    let half = libm::ceil(3.0 * radius) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|x| libm::exp(-0.5 * (x as f64 / radius) * (x as f64 / radius)))
        .collect();
    let norm = libm::sqrt(k.iter().map(|v| v * v).sum::<f64>());
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

/// Spatially correlated zero-mean Gaussian field with per-pixel standard
/// deviation `sigma`: white noise on a padded canvas convolved with a
/// separable unit-norm Gaussian kernel (no boundary truncation).
pub fn correlated_gaussian_field(width: usize, height: usize, sigma: f64, radius: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; width * height];
    }
    let k = unit_norm_kernel(radius);
    let pad = k.len() / 2;
    let (pw, ph) = (width + 2 * pad, height + 2 * pad);
    let mut white = vec![0.0f64; pw * ph];
    for (b, chunk) in white.chunks_mut(BLOCK_ROWS * pw).enumerate() {
        let mut rng = block_rng(seed, b);
        for v in chunk {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = sigma * z;
        }
    }
    // Horizontal pass over all padded rows, then vertical pass to the output.
    let mut rows = vec![0.0f64; width * ph];
    for j in 0..ph {
        for i in 0..width {
            rows[i + width * j] = k.iter().enumerate().map(|(t, w)| w * white[i + t + pw * j]).sum();
        }
    }
    let mut out = vec![0.0f64; width * height];
    for j in 0..height {
        for i in 0..width {
            out[i + width * j] = k.iter().enumerate().map(|(t, w)| w * rows[i + width * (j + t)]).sum();
        }
    }
    out
}

/// Expected photon counts `N(u)`.
///
/// With retained spectral transmission, `N(u) = N₀ Σ_E w(E) T(E, u)` plus
/// `N₀` times any additive (scatter) signal on top of that primary. The
/// normalization makes an unattenuated pixel expect exactly `N₀` photons.
pub fn expected_counts(image: &ProjectionImage, spectrum: &Spectrum, photon_fluence: f64) -> Vec<f64> {
    match image.primary(spectrum) {
        Some(primary) => primary
            .iter()
            .zip(&image.values)
            .map(|(p, v)| photon_fluence * (p + (v - p).max(0.0)))
            .collect(),
        None => image.values.iter().map(|v| photon_fluence * v.max(0.0)).collect(),
    }
}

/// Adds quantum and read-out noise; output is `counts / N₀ + electronic`.
pub fn apply_noise<R: RngCore + ?Sized>(
    image: &ProjectionImage,
    spectrum: &Spectrum,
    config: &NoiseConfig,
    rng: &mut R,
) -> Result<ProjectionImage> {
    config.validate()?;
    let photon_seed = rng.next_u64();
    let electronic_seed = rng.next_u64();
    let expected = expected_counts(image, spectrum, config.photon_fluence);
    let counts = sample_photon_counts(&expected, image.width, photon_seed);
    let electronic = correlated_gaussian_field(
        image.width,
        image.height,
        config.electronic_sigma,
        config.electronic_correlation_radius,
        electronic_seed,
    );
    let values = counts
        .iter()
        .zip(&electronic)
        .map(|(c, e)| c / config.photon_fluence + e)
        .collect();
    ProjectionImage::new(image.width, image.height, values)
}
