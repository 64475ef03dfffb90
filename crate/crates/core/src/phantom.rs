//! Synthetic fractured-pelvis phantoms and controlled prediction degradations.
//!
//! Bones are ellipsoids cut by fracture planes. Each sign pattern of a
//! bone's planes is one fragment; fragments under the minimum volume are
//! merged into the neighbour they share the most faces with.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{decode_label, AnatomyClass, FragmentLabel, SLOTS_PER_BONE};
use crate::volume::{Grid, IntensityVolume, LabelField, LabelVolume};

/// Fragments smaller than this (mm³) are merged into a neighbour.
pub const MIN_FRAGMENT_MM3: f64 = 500.0;
/// Most fracture planes accepted per bone.
pub const MAX_PLANES_PER_BONE: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    /// World coordinates (mm).
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let mut s = 0.0;
        for a in 0..3 {
            let d = (p[a] - self.center[a]) / self.radii[a];
            s += d * d;
        }
        s <= 1.0
    }

    pub fn volume_mm3(&self) -> f64 {
        4.0 / 3.0 * core::f64::consts::PI * self.radii[0] * self.radii[1] * self.radii[2]
    }
}

/// Oriented plane; `signed_distance` is positive on the side `normal` points to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

impl Plane {
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|a| (p[a] - self.point[a]) * self.normal[a]).sum()
    }

    fn validate(&self) -> Result<()> {
        let n2: f64 = self.normal.iter().map(|v| v * v).sum();
        if !(n2 > 0.0 && n2.is_finite()) || self.point.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("plane normal must be non-zero and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneSpec {
    pub shape: Ellipsoid,
    #[serde(default)]
    pub fracture_planes: Vec<Plane>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HuValues {
    pub air: f32,
    pub soft_tissue: f32,
    pub bone: f32,
}

impl Default for HuValues {
    fn default() -> Self {
        Self { air: -1000.0, soft_tissue: 40.0, bone: 700.0 }
    }
}

/// Phantom description. The grid origin is at world `(0, 0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Soft-tissue envelope; air outside.
    pub body: Ellipsoid,
    /// Sacrum, left hip, right hip.
    pub bones: [BoneSpec; 3],
    #[serde(default)]
    pub hu: HuValues,
    /// Standard deviation of additive Gaussian HU noise; zero disables it.
    #[serde(default)]
    pub hu_noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::pelvis([128; 3], [1.0; 3])
    }
}

impl PhantomSpec {
    /// Unfractured layout scaled to the volume extent: sacrum in the middle,
    /// left hip toward low x, right hip toward high x.
    pub fn pelvis(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        let e: [f64; 3] = core::array::from_fn(|a| dims[a] as f64 * spacing[a]);
        let at = |f: [f64; 3]| -> [f64; 3] { core::array::from_fn(|a| f[a] * e[a]) };
        let bone = |c, r| BoneSpec { shape: Ellipsoid { center: at(c), radii: at(r) }, fracture_planes: Vec::new() };
        Self {
            dims,
            spacing,
            body: Ellipsoid { center: at([0.5; 3]), radii: at([0.46, 0.4, 0.46]) },
            bones: [
                bone([0.5, 0.42, 0.5], [0.09, 0.12, 0.2]),
                bone([0.27, 0.5, 0.5], [0.12, 0.18, 0.3]),
                bone([0.73, 0.5, 0.5], [0.12, 0.18, 0.3]),
            ],
            hu: HuValues::default(),
            hu_noise_sigma: 0.0,
            seed: 0,
        }
    }

    /// Pelvis layout with jittered bones and up to `max_planes` random
    /// fracture planes per bone, all drawn from `seed`.
    pub fn random(dims: [usize; 3], spacing: [f64; 3], max_planes: usize, seed: u64) -> Self {
        let mut spec = Self::pelvis(dims, spacing);
        spec.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_planes = max_planes.min(MAX_PLANES_PER_BONE);
        for bone in spec.bones.iter_mut() {
            let s = &mut bone.shape;
            for a in 0..3 {
                s.center[a] += s.radii[a] * rng.random_range(-0.1..0.1);
                s.radii[a] *= rng.random_range(0.9..1.1);
            }
            let n = rng.random_range(0..=max_planes);
            bone.fracture_planes = (0..n).map(|_| random_plane(&mut rng, s.center, s.radii)).collect();
        }
        spec
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dims, self.spacing, [0.0; 3])
    }

    fn validate(&self) -> Result<()> {
        for e in core::iter::once(&self.body).chain(self.bones.iter().map(|b| &b.shape)) {
            if e.radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) || e.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter("ellipsoid radii must be positive"));
            }
        }
        for b in &self.bones {
            if b.fracture_planes.len() > MAX_PLANES_PER_BONE {
                return Err(Error::InvalidParameter("at most 9 fracture planes per bone"));
            }
            b.fracture_planes.iter().try_for_each(Plane::validate)?;
        }
        if !(self.hu_noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("HU noise sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Plane through a point jittered around `center` with an isotropic normal.
fn random_plane<R: RngCore + ?Sized>(rng: &mut R, center: [f64; 3], radii: [f64; 3]) -> Plane {
    let point = core::array::from_fn(|a| center[a] + radii[a] * rng.random_range(-0.4..0.4));
    let normal = loop {
        let n: [f64; 3] = core::array::from_fn(|_| StandardNormal.sample(&mut *rng));
        let len = libm::sqrt(n.iter().map(|v| v * v).sum());
        if len > 1e-9 {
            break n.map(|v| v / len);
        }
    };
    Plane { point, normal }
}

/// Non-fatal adjustments made while generating a phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhantomWarning {
    /// A fragment below the minimum volume was merged into a neighbour.
    SliverMerged { anatomy: AnatomyClass, volume_mm3: f64 },
    /// More than ten fragments; the smallest was merged into a neighbour.
    FragmentCapExceeded { anatomy: AnatomyClass },
    /// The whole bone is below the minimum fragment volume.
    SmallBone { anatomy: AnatomyClass, volume_mm3: f64 },
    /// The bone does not cover any voxel.
    EmptyBone { anatomy: AnatomyClass },
}

impl fmt::Display for PhantomWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SliverMerged { anatomy, volume_mm3 } => {
                write!(f, "{}: merged a {volume_mm3:.1} mm3 sliver into its neighbour", anatomy.name())
            }
            Self::FragmentCapExceeded { anatomy } => {
                write!(f, "{}: more than 10 fragments, merged the smallest", anatomy.name())
            }
            Self::SmallBone { anatomy, volume_mm3 } => {
                write!(f, "{}: whole bone is only {volume_mm3:.1} mm3", anatomy.name())
            }
            Self::EmptyBone { anatomy } => write!(f, "{}: bone covers no voxels", anatomy.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub ct: IntensityVolume,
    pub gt: LabelVolume,
    pub warnings: Vec<PhantomWarning>,
}

/// Region keys are dense per bone; `owner[v]` holds `bone * 512 + pattern + 1`.
fn region_key(bone: usize, pattern: usize) -> u32 {
    (bone * 512 + pattern + 1) as u32
}

/// Rasterizes the phantom.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let grid = spec.grid()?;
    let n = grid.len();
    let mut ct = vec![spec.hu.air; n];
    let mut owner = vec![0u32; n];
    for (idx, hu) in ct.iter_mut().enumerate() {
        let p = grid.center(grid.coords(idx));
        if spec.body.contains(p) {
            *hu = spec.hu.soft_tissue;
        }
        // Earlier bones win where ellipsoids overlap.
        if let Some((b, bone)) = spec.bones.iter().enumerate().find(|(_, b)| b.shape.contains(p)) {
            *hu = spec.hu.bone;
            let mut pattern = 0usize;
            for (k, plane) in bone.fracture_planes.iter().enumerate() {
                if plane.signed_distance(p) >= 0.0 {
                    pattern |= 1 << k;
                }
            }
            owner[idx] = region_key(b, pattern);
        }
    }

    let voxel_mm3 = spec.spacing.iter().product::<f64>();
    let mut warnings = Vec::new();
    let mut labels = vec![0u8; n];
    for (b, anatomy) in AnatomyClass::ALL.into_iter().enumerate() {
        let lo = region_key(b, 0);
        let hi = region_key(b, 511);
        let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
        for &o in &owner {
            if (lo..=hi).contains(&o) {
                *sizes.entry(o).or_default() += 1;
            }
        }
        if sizes.is_empty() {
            warnings.push(PhantomWarning::EmptyBone { anatomy });
            continue;
        }
        let total: usize = sizes.values().sum();
        if (total as f64) * voxel_mm3 < MIN_FRAGMENT_MM3 {
            warnings.push(PhantomWarning::SmallBone { anatomy, volume_mm3: total as f64 * voxel_mm3 });
        }
        // Merge slivers, then enforce the slot limit, smallest region first.
        loop {
            let Some((&small, &count)) = sizes.iter().min_by_key(|(&k, &c)| (c, k)) else { break };
            let sliver = (count as f64) * voxel_mm3 < MIN_FRAGMENT_MM3;
            let over_cap = sizes.len() > SLOTS_PER_BONE as usize;
            if sizes.len() == 1 || (!sliver && !over_cap) {
                break;
            }
            let into = merge_target(&grid, &owner, small, &sizes);
            for o in owner.iter_mut() {
                if *o == small {
                    *o = into;
                }
            }
            sizes.remove(&small);
            *sizes.get_mut(&into).expect("target region exists") += count;
            warnings.push(if sliver {
                PhantomWarning::SliverMerged { anatomy, volume_mm3: count as f64 * voxel_mm3 }
            } else {
                PhantomWarning::FragmentCapExceeded { anatomy }
            });
        }
        let mut order: Vec<(u32, usize)> = sizes.into_iter().collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut id_of = BTreeMap::new();
        for (rank, (key, _)) in order.iter().enumerate() {
            id_of.insert(*key, FragmentLabel::new(anatomy, rank as u8 + 1)?.id());
        }
        for (l, o) in labels.iter_mut().zip(&owner) {
            if let Some(&id) = id_of.get(o) {
                *l = id;
            }
        }
    }

    if spec.hu_noise_sigma > 0.0 {
        let slice = spec.dims[0] * spec.dims[1];
        for (z, chunk) in ct.chunks_mut(slice).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(z as u64);
            for v in chunk {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += (spec.hu_noise_sigma * e) as f32;
            }
        }
    }

    Ok(Phantom { ct: IntensityVolume::new(grid, ct)?, gt: LabelVolume::new(grid, labels)?, warnings })
}

/// Region of the same bone sharing the most faces with `region`; the
/// largest other region if none touches it.
fn merge_target(grid: &Grid, owner: &[u32], region: u32, sizes: &BTreeMap<u32, usize>) -> u32 {
    let mut contact: BTreeMap<u32, usize> = BTreeMap::new();
    let mut nb = [0usize; 6];
    for (idx, &o) in owner.iter().enumerate() {
        if o != region {
            continue;
        }
        let (k, _) = grid.face_neighbors(grid.coords(idx), &mut nb);
        for &j in &nb[..k] {
            let other = owner[j];
            if other != region && sizes.contains_key(&other) {
                *contact.entry(other).or_default() += 1;
            }
        }
    }
    let best = contact.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
    match best {
        Some((key, _)) => key,
        None => sizes
            .iter()
            .filter(|(&k, _)| k != region)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&k, _)| k)
            .expect("at least two regions"),
    }
}

/// One degradation step applied to a label volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PerturbOp {
    /// Grow fragments into background by `k` face-connected voxels. Where
    /// two fragments compete for a voxel the lower id wins.
    Dilate {
        k: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<u8>,
    },
    /// Peel `k` layers off fragment boundaries (grid borders do not erode).
    Erode {
        k: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<u8>,
    },
    DeleteFragment { label: u8 },
    /// Relabel `b` as `a`, then renumber the affected bones by size.
    Merge { a: u8, b: u8 },
    /// Move the part of `label` on the positive side of `plane` to the next
    /// free index of its bone; a random plane through the fragment centroid
    /// is drawn when none is given.
    Split {
        label: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plane: Option<Plane>,
    },
    /// Rigid translation, rounded to whole voxels. Voxels leaving the grid
    /// are dropped; the moved fragment overwrites what it lands on.
    Shift { label: u8, mm: [f64; 3] },
    /// Randomly permute fragment indices within every bone.
    Shuffle,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub ops: Vec<PerturbOp>,
    #[serde(default)]
    pub seed: u64,
}

/// Applies `spec.ops` in order. Operation `i` draws randomness from stream
/// `i` of the spec seed.
pub fn perturb(gt: &LabelVolume, spec: &PerturbationSpec) -> Result<LabelVolume> {
    let grid = *gt.grid();
    let mut v = gt.voxels().to_vec();
    for (i, op) in spec.ops.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        match *op {
            PerturbOp::Dilate { k, label } => {
                check_optional(&v, label)?;
                for _ in 0..k {
                    dilate_once(&grid, &mut v, label);
                }
            }
            PerturbOp::Erode { k, label } => {
                check_optional(&v, label)?;
                for _ in 0..k {
                    erode_once(&grid, &mut v, label);
                }
            }
            PerturbOp::DeleteFragment { label } => {
                require_present(&v, label)?;
                v.iter_mut().filter(|x| **x == label).for_each(|x| *x = 0);
            }
            PerturbOp::Merge { a, b } => {
                require_present(&v, a)?;
                require_present(&v, b)?;
                if a != b {
                    v.iter_mut().filter(|x| **x == b).for_each(|x| *x = a);
                    let ba = decode_label(a as u32)?.anatomy;
                    let bb = decode_label(b as u32)?.anatomy;
                    renumber_by_size(&mut v, ba);
                    if bb != ba {
                        renumber_by_size(&mut v, bb);
                    }
                }
            }
            PerturbOp::Split { label, plane } => {
                require_present(&v, label)?;
                let plane = match plane {
                    Some(p) => {
                        p.validate()?;
                        p
                    }
                    None => {
                        let c = centroid(&grid, &v, label);
                        Plane { point: c, ..random_plane(&mut rng, c, [0.0; 3]) }
                    }
                };
                split(&grid, &mut v, label, &plane)?;
            }
            PerturbOp::Shift { label, mm } => {
                require_present(&v, label)?;
                if mm.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidParameter("shift must be finite"));
                }
                let d: [isize; 3] = core::array::from_fn(|a| libm::round(mm[a] / grid.spacing[a]) as isize);
                shift(&grid, &mut v, label, d);
            }
            PerturbOp::Shuffle => shuffle(&mut v, &mut rng),
        }
    }
    LabelVolume::new(grid, v)
}

fn require_present(v: &[u8], label: u8) -> Result<()> {
    decode_label(label as u32)?;
    if v.contains(&label) {
        Ok(())
    } else {
        Err(Error::InvalidLabel(label as u32))
    }
}

fn check_optional(v: &[u8], label: Option<u8>) -> Result<()> {
    label.map_or(Ok(()), |l| require_present(v, l))
}

fn dilate_once(grid: &Grid, v: &mut [u8], label: Option<u8>) {
    let src = v.to_vec();
    let mut nb = [0usize; 6];
    for (idx, out) in v.iter_mut().enumerate() {
        if src[idx] != 0 {
            continue;
        }
        let (k, _) = grid.face_neighbors(grid.coords(idx), &mut nb);
        let grow = nb[..k]
            .iter()
            .map(|&j| src[j])
            .filter(|&l| l != 0 && label.map_or(true, |t| t == l))
            .min();
        if let Some(l) = grow {
            *out = l;
        }
    }
}

fn erode_once(grid: &Grid, v: &mut [u8], label: Option<u8>) {
    let src = v.to_vec();
    let mut nb = [0usize; 6];
    for (idx, out) in v.iter_mut().enumerate() {
        let l = src[idx];
        if l == 0 || label.is_some_and(|t| t != l) {
            continue;
        }
        let (k, _) = grid.face_neighbors(grid.coords(idx), &mut nb);
        if nb[..k].iter().any(|&j| src[j] != l) {
            *out = 0;
        }
    }
}

fn centroid(grid: &Grid, v: &[u8], label: u8) -> [f64; 3] {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for (idx, _) in v.iter().enumerate().filter(|(_, &x)| x == label) {
        let p = grid.center(grid.coords(idx));
        (0..3).for_each(|a| sum[a] += p[a]);
        n += 1;
    }
    sum.map(|s| s / n as f64)
}

fn split(grid: &Grid, v: &mut [u8], label: u8, plane: &Plane) -> Result<()> {
    let anatomy = decode_label(label as u32)?.anatomy;
    let used: Vec<u8> = FragmentLabel::all()
        .filter(|f| f.anatomy == anatomy)
        .map(|f| f.id())
        .filter(|id| v.contains(id))
        .collect();
    let free = FragmentLabel::all()
        .filter(|f| f.anatomy == anatomy)
        .map(|f| f.id())
        .find(|id| !used.contains(id))
        .ok_or(Error::InvalidParameter("bone already has ten fragments"))?;
    for (idx, x) in v.iter_mut().enumerate() {
        if *x == label && plane.signed_distance(grid.center(grid.coords(idx))) >= 0.0 {
            *x = free;
        }
    }
    Ok(())
}

fn shift(grid: &Grid, v: &mut [u8], label: u8, d: [isize; 3]) {
    let moved: Vec<usize> = v.iter().enumerate().filter(|(_, &x)| x == label).map(|(i, _)| i).collect();
    for &i in &moved {
        v[i] = 0;
    }
    for &i in &moved {
        let c = grid.coords(i);
        let t: [isize; 3] = core::array::from_fn(|a| c[a] as isize + d[a]);
        if (0..3).all(|a| t[a] >= 0 && (t[a] as usize) < grid.dims[a]) {
            v[grid.index(t[0] as usize, t[1] as usize, t[2] as usize)] = label;
        }
    }
}

/// Renumbers the present fragments of `anatomy` as 1..n by descending size
/// (ties by old id).
fn renumber_by_size(v: &mut [u8], anatomy: AnatomyClass) {
    let mut counts = [0usize; 31];
    for &x in v.iter() {
        counts[x as usize] += 1;
    }
    let mut present: Vec<FragmentLabel> =
        FragmentLabel::all().filter(|f| f.anatomy == anatomy && counts[f.id() as usize] > 0).collect();
    present.sort_by(|a, b| counts[b.id() as usize].cmp(&counts[a.id() as usize]).then(a.id().cmp(&b.id())));
    let mut map: [u8; 31] = core::array::from_fn(|i| i as u8);
    for (rank, f) in present.iter().enumerate() {
        map[f.id() as usize] = 10 * anatomy.code() + rank as u8 + 1;
    }
    v.iter_mut().for_each(|x| *x = map[*x as usize]);
}

fn shuffle<R: RngCore + ?Sized>(v: &mut [u8], rng: &mut R) {
    let mut map: [u8; 31] = core::array::from_fn(|i| i as u8);
    for anatomy in AnatomyClass::ALL {
        let mut ids: Vec<u8> = FragmentLabel::all().filter(|f| f.anatomy == anatomy).map(|f| f.id()).collect();
        let base = ids.clone();
        // Fisher-Yates over all ten slots; empty slots carry no voxels.
        for i in (1..ids.len()).rev() {
            let j = rng.random_range(0..=i);
            ids.swap(i, j);
        }
        for (from, to) in base.iter().zip(&ids) {
            map[*from as usize] = *to;
        }
    }
    v.iter_mut().for_each(|x| *x = map[*x as usize]);
}

/// Present fragment ids of `field` grouped per bone, in id order.
pub fn fragments_per_bone<F: LabelField + ?Sized>(field: &F) -> [Vec<u8>; 3] {
    let counts = crate::volume::label_counts(field);
    core::array::from_fn(|b| {
        (1..=SLOTS_PER_BONE).map(|i| 10 * b as u8 + i).filter(|&id| counts[id as usize - 1] > 0).collect()
    })
}
