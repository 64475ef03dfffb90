//! Source spectra and mass attenuation tables.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::material::MaterialId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBin {
    pub energy_kev: f64,
    pub weight: f64,
}

/// Discrete source spectrum with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SpectrumBin>", into = "Vec<SpectrumBin>")]
pub struct Spectrum {
    bins: Vec<SpectrumBin>,
}

impl Spectrum {
    /// Validates ordering and positivity, then normalizes the weights.
    pub fn new(bins: Vec<SpectrumBin>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidParameter("spectrum needs at least one bin"));
        }
        if bins.iter().any(|b| !(b.energy_kev > 0.0) || !(b.weight >= 0.0) || !b.weight.is_finite()) {
            return Err(Error::InvalidParameter("spectrum energies must be positive and weights non-negative"));
        }
        if bins.windows(2).any(|w| !(w[0].energy_kev < w[1].energy_kev)) {
            return Err(Error::InvalidParameter("spectrum energies must be strictly increasing"));
        }
        let total: f64 = bins.iter().map(|b| b.weight).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("spectrum weights sum to zero"));
        }
        let bins = bins
            .into_iter()
            .map(|b| SpectrumBin { energy_kev: b.energy_kev, weight: b.weight / total })
            .collect();
        Ok(Self { bins })
    }

    pub fn monoenergetic(energy_kev: f64) -> Result<Self> {
        Self::new(vec![SpectrumBin { energy_kev, weight: 1.0 }])
    }

    /// Coarse filtered 120 kVp tungsten-anode spectrum in 10 keV bins.
    pub fn default_120kvp() -> Self {
        const BINS: [(f64, f64); 11] = [
            (20.0, 0.005),
            (30.0, 0.040),
            (40.0, 0.100),
            (50.0, 0.150),
            (60.0, 0.170),
            (70.0, 0.160),
            (80.0, 0.130),
            (90.0, 0.100),
            (100.0, 0.070),
            (110.0, 0.050),
            (120.0, 0.025),
        ];
        Self::new(BINS.iter().map(|&(e, w)| SpectrumBin { energy_kev: e, weight: w }).collect())
            .expect("built-in spectrum is valid")
    }

    pub fn bins(&self) -> &[SpectrumBin] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

impl Default for Spectrum {
    fn default() -> Self {
        Self::default_120kvp()
    }
}

impl TryFrom<Vec<SpectrumBin>> for Spectrum {
    type Error = Error;

    fn try_from(bins: Vec<SpectrumBin>) -> Result<Self> {
        Self::new(bins)
    }
}

impl From<Spectrum> for Vec<SpectrumBin> {
    fn from(s: Spectrum) -> Self {
        s.bins
    }
}

/// `(energy keV, mass attenuation cm²/g)` samples for one material.
pub type AttenuationCurve = Vec<(f64, f64)>;

/// Mass attenuation coefficients per material, log-log interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationTable {
    pub air: AttenuationCurve,
    pub soft_tissue: AttenuationCurve,
    pub bone: AttenuationCurve,
}

// Total mass attenuation with coherent scattering, NIST XCOM / Hubbell &
// Seltzer: dry air (near sea level), ICRU-44 soft tissue, ICRU-44 cortical
// bone. Energies in keV.
const ENERGIES: [f64; 10] = [10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0, 80.0, 100.0, 150.0];
const AIR: [f64; 10] = [5.120, 1.614, 0.7779, 0.3538, 0.2485, 0.2080, 0.1875, 0.1662, 0.1541, 0.1356];
const SOFT_TISSUE: [f64; 10] = [5.379, 1.700, 0.8204, 0.3792, 0.2697, 0.2260, 0.2050, 0.1823, 0.1693, 0.1492];
const BONE: [f64; 10] = [28.51, 9.032, 4.001, 1.331, 0.6655, 0.4242, 0.3148, 0.2229, 0.1855, 0.1480];

impl Default for AttenuationTable {
    fn default() -> Self {
        let curve = |mu: &[f64; 10]| ENERGIES.iter().copied().zip(mu.iter().copied()).collect();
        Self { air: curve(&AIR), soft_tissue: curve(&SOFT_TISSUE), bone: curve(&BONE) }
    }
}

impl AttenuationTable {
    pub fn curve(&self, material: MaterialId) -> &AttenuationCurve {
        match material {
            MaterialId::Air => &self.air,
            MaterialId::SoftTissue => &self.soft_tissue,
            MaterialId::Bone => &self.bone,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in MaterialId::ALL {
            let c = self.curve(m);
            if c.is_empty() {
                return Err(Error::InvalidParameter("attenuation curve is empty"));
            }
            if c.iter().any(|&(e, mu)| !(e > 0.0 && mu > 0.0)) {
                return Err(Error::InvalidParameter("attenuation entries must be positive"));
            }
            if c.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                return Err(Error::InvalidParameter("attenuation energies must be increasing"));
            }
        }
        Ok(())
    }

    /// Mass attenuation (cm²/g) at `energy_kev`.
    pub fn mass_attenuation(&self, material: MaterialId, energy_kev: f64) -> Result<f64> {
        let c = self.curve(material);
        let (first, last) = match (c.first(), c.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(Error::EnergyRange(energy_kev)),
        };
        if !(energy_kev >= first.0 && energy_kev <= last.0) {
            return Err(Error::EnergyRange(energy_kev));
        }
        let k = c.partition_point(|&(e, _)| e < energy_kev);
        if c[k].0 == energy_kev {
            return Ok(c[k].1);
        }
        let (e0, m0) = c[k - 1];
        let (e1, m1) = c[k];
        let t = libm::log(energy_kev / e0) / libm::log(e1 / e0);
        Ok(libm::exp(libm::log(m0) + t * (libm::log(m1) - libm::log(m0))))
    }

    /// Coefficients for every spectrum bin, `[bin][material]`.
    pub fn for_spectrum(&self, spectrum: &Spectrum) -> Result<Vec<[f64; 3]>> {
        self.validate()?;
        spectrum
            .bins()
            .iter()
            .map(|b| {
                Ok([
                    self.mass_attenuation(MaterialId::Air, b.energy_kev)?,
                    self.mass_attenuation(MaterialId::SoftTissue, b.energy_kev)?,
                    self.mass_attenuation(MaterialId::Bone, b.energy_kev)?,
                ])
            })
            .collect()
    }
}
