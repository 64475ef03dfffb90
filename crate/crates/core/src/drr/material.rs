use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Grid, IntensityVolume};

/// Density assigned to air voxels whose water-scaled density falls below it.
pub const AIR_DENSITY: f32 = 0.0012;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum MaterialId {
    Air = 0,
    SoftTissue = 1,
    Bone = 2,
}

impl MaterialId {
    pub const ALL: [MaterialId; 3] = [Self::Air, Self::SoftTissue, Self::Bone];

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

/// HU cut-offs separating air, soft tissue and bone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialThresholds {
    pub air_hu: f32,
    pub bone_hu: f32,
}

impl Default for MaterialThresholds {
    fn default() -> Self {
        Self { air_hu: -400.0, bone_hu: 250.0 }
    }
}

/// Per-voxel material class and density (g/cm³) on a CT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialVolume {
    grid: Grid,
    materials: Vec<MaterialId>,
    densities: Vec<f32>,
}

impl MaterialVolume {
    pub fn new(grid: Grid, materials: Vec<MaterialId>, densities: Vec<f32>) -> Result<Self> {
        if materials.len() != grid.len() || densities.len() != grid.len() {
            return Err(Error::InvalidGrid("material arrays do not match dims"));
        }
        if densities.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidParameter("densities must be non-negative"));
        }
        Ok(Self { grid, materials, densities })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn materials(&self) -> &[MaterialId] {
        &self.materials
    }

    pub fn densities(&self) -> &[f32] {
        &self.densities
    }
}

/// Material and density of one HU value.
pub fn classify_hu(hu: f32, thresholds: &MaterialThresholds) -> (MaterialId, f32) {
    let water_scaled = (1.0 + hu / 1000.0).max(0.0);
    if hu < thresholds.air_hu {
        (MaterialId::Air, water_scaled.max(AIR_DENSITY))
    } else if hu > thresholds.bone_hu {
        (MaterialId::Bone, water_scaled)
    } else {
        (MaterialId::SoftTissue, water_scaled)
    }
}

/// Threshold-based decomposition of a CT volume into air, soft tissue and
/// bone with water-scaled densities.
pub fn decompose_materials(ct: &IntensityVolume, thresholds: &MaterialThresholds) -> Result<MaterialVolume> {
    if !(thresholds.air_hu < thresholds.bone_hu) {
        return Err(Error::InvalidParameter("air threshold must lie below bone threshold"));
    }
    let (materials, densities) = ct.voxels().iter().map(|&hu| classify_hu(hu, thresholds)).unzip();
    Ok(MaterialVolume { grid: *ct.grid(), materials, densities })
}
