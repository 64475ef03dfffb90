//! Cone-beam camera geometry and pose sampling.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    libm::sqrt(dot(a, a))
}

#[inline]
pub(crate) fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Axis the principal ray is tilted away from: patient anterior-posterior
/// (+y) for a supine patient.
pub const VERTICAL: Vec3 = [0.0, 1.0, 0.0];

/// Challenge detector resolution.
pub const DETECTOR_RESOLUTION: [usize; 2] = [448, 448];

/// Point source and flat detector.
///
/// Pixel `(i, j)` (column `i` along `u`, row `j` along `v`) is centered at
/// `detector_center + ((i + 0.5)/w - 0.5) * size_u * u + ((j + 0.5)/h - 0.5) * size_v * v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraGeometry {
    pub source: Vec3,
    pub detector_center: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub detector_size_mm: [f64; 2],
    pub resolution: [usize; 2],
}

impl CameraGeometry {
    /// Camera looking from `source` along the unit `direction` with the
    /// detector `source_to_detector` millimetres away.
    pub fn looking_along(
        source: Vec3,
        direction: Vec3,
        source_to_detector: f64,
        detector_size_mm: f64,
        resolution: [usize; 2],
    ) -> Self {
        let d = normalize(direction);
        let reference = if libm::fabs(d[2]) < 0.999 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
        let u = normalize(cross(d, reference));
        let v = cross(d, u);
        Self {
            source,
            detector_center: add(source, scale(d, source_to_detector)),
            u_axis: u,
            v_axis: v,
            detector_size_mm: [detector_size_mm; 2],
            resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        const TOL: f64 = 1e-9;
        let (u, v) = (self.u_axis, self.v_axis);
        if libm::fabs(norm(u) - 1.0) > TOL || libm::fabs(norm(v) - 1.0) > TOL || libm::fabs(dot(u, v)) > TOL {
            return Err(Error::InvalidParameter("detector axes must be orthonormal"));
        }
        let normal = cross(u, v);
        if libm::fabs(dot(sub(self.source, self.detector_center), normal)) < TOL {
            return Err(Error::InvalidParameter("source lies on the detector plane"));
        }
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return Err(Error::InvalidParameter("detector resolution must be non-zero"));
        }
        if !(self.detector_size_mm[0] > 0.0 && self.detector_size_mm[1] > 0.0) {
            return Err(Error::InvalidParameter("detector size must be positive"));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.resolution[0]
    }

    pub fn height(&self) -> usize {
        self.resolution[1]
    }

    /// Unit vector from source to detector center.
    pub fn principal_direction(&self) -> Vec3 {
        normalize(sub(self.detector_center, self.source))
    }

    pub fn pixel_center(&self, i: usize, j: usize) -> Vec3 {
        let fu = ((i as f64 + 0.5) / self.resolution[0] as f64 - 0.5) * self.detector_size_mm[0];
        let fv = ((j as f64 + 0.5) / self.resolution[1] as f64 - 0.5) * self.detector_size_mm[1];
        add(self.detector_center, add(scale(self.u_axis, fu), scale(self.v_axis, fv)))
    }

    /// Unit direction of the ray from the source through pixel `(i, j)`.
    pub fn ray_direction(&self, i: usize, j: usize) -> Vec3 {
        normalize(sub(self.pixel_center(i, j), self.source))
    }

    /// Pixel hit by the ray from the source through `p`, if on the detector.
    pub fn project_point(&self, p: Vec3) -> Option<(usize, usize)> {
        let normal = cross(self.u_axis, self.v_axis);
        let d = sub(p, self.source);
        let denom = dot(d, normal);
        if denom == 0.0 {
            return None;
        }
        let t = dot(sub(self.detector_center, self.source), normal) / denom;
        if t <= 0.0 {
            return None;
        }
        let hit = sub(add(self.source, scale(d, t)), self.detector_center);
        let fu = dot(hit, self.u_axis) / self.detector_size_mm[0] + 0.5;
        let fv = dot(hit, self.v_axis) / self.detector_size_mm[1] + 0.5;
        if !(0.0..1.0).contains(&fu) || !(0.0..1.0).contains(&fv) {
            return None;
        }
        Some(((fu * self.resolution[0] as f64) as usize, (fv * self.resolution[1] as f64) as usize))
    }
}

/// Randomized C-arm pose parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseSampling {
    pub max_angle_deg: f64,
    pub source_to_detector_mm: f64,
    pub source_to_target_mm: f64,
    pub detector_size_mm: f64,
    pub resolution: [usize; 2],
}

impl Default for PoseSampling {
    fn default() -> Self {
        Self {
            max_angle_deg: 60.0,
            source_to_detector_mm: 1000.0,
            source_to_target_mm: 700.0,
            detector_size_mm: 300.0,
            resolution: DETECTOR_RESOLUTION,
        }
    }
}

/// Unit direction at polar angle `theta` from [`VERTICAL`] and azimuth `phi`.
pub fn direction_from_angles(theta: f64, phi: f64) -> Vec3 {
    let s = libm::sin(theta);
    [s * libm::cos(phi), libm::cos(theta), s * libm::sin(phi)]
}

/// Draws a principal-ray direction uniformly over the spherical cap of
/// half-angle `max_angle_deg` about the vertical and places the source so
/// the principal ray passes through `target`.
pub fn sample_camera_pose<R: RngCore + ?Sized>(
    rng: &mut R,
    params: &PoseSampling,
    target: Vec3,
) -> Result<CameraGeometry> {
    if !(params.max_angle_deg >= 0.0 && params.max_angle_deg <= 90.0) {
        return Err(Error::InvalidParameter("max angle must lie in [0, 90] degrees"));
    }
    if !(params.source_to_target_mm > 0.0 && params.source_to_detector_mm > params.source_to_target_mm) {
        return Err(Error::InvalidParameter("target must lie between source and detector"));
    }
    let cos_max = libm::cos(params.max_angle_deg.to_radians());
    // Uniform area on the cap ⇔ cos(theta) uniform on [cos_max, 1].
    let cos_theta = 1.0 - rng.random::<f64>() * (1.0 - cos_max);
    let theta = libm::acos(cos_theta.clamp(-1.0, 1.0));
    let phi = rng.random::<f64>() * core::f64::consts::TAU;
    let d = direction_from_angles(theta, phi);
    let source = sub(target, scale(d, params.source_to_target_mm));
    let cam = CameraGeometry::looking_along(
        source,
        d,
        params.source_to_detector_mm,
        params.detector_size_mm,
        params.resolution,
    );
    cam.validate()?;
    Ok(cam)
}

/// Polar angle of a camera's principal ray from the vertical.
pub fn polar_angle(cam: &CameraGeometry) -> f64 {
    libm::acos(dot(cam.principal_direction(), VERTICAL).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_angle_is_vertical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PoseSampling { max_angle_deg: 0.0, ..Default::default() };
        let cam = sample_camera_pose(&mut rng, &p, [10.0, 20.0, 30.0]).unwrap();
        let d = cam.principal_direction();
        assert!((d[1] - 1.0).abs() < 1e-15 && d[0].abs() < 1e-15 && d[2].abs() < 1e-15);
        assert_eq!(cam.source, [10.0, 20.0 - 700.0, 30.0]);
    }

    #[test]
    fn same_seed_same_pose() {
        let p = PoseSampling::default();
        let a = sample_camera_pose(&mut ChaCha8Rng::seed_from_u64(5), &p, [0.0; 3]).unwrap();
        let b = sample_camera_pose(&mut ChaCha8Rng::seed_from_u64(5), &p, [0.0; 3]).unwrap();
        assert_eq!(a, b);
        assert!(polar_angle(&a) <= 60f64.to_radians() + 1e-12);
    }

    #[test]
    fn principal_ray_passes_through_target() {
        let p = PoseSampling::default();
        let target = [5.0, -3.0, 12.0];
        let cam = sample_camera_pose(&mut ChaCha8Rng::seed_from_u64(9), &p, target).unwrap();
        let to_target = normalize(sub(target, cam.source));
        let d = cam.principal_direction();
        assert!(norm(sub(to_target, d)) < 1e-12);
        let (w, h) = (cam.width(), cam.height());
        assert_eq!(cam.project_point(cam.pixel_center(w / 2, h / 2)), Some((w / 2, h / 2)));
        let hit = sub(target, cam.detector_center);
        let off = normalize(sub(cam.detector_center, cam.source));
        assert!(norm(sub(hit, scale(off, dot(hit, off)))) < 1e-9);
    }

    #[test]
    fn invalid_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PoseSampling { max_angle_deg: 91.0, ..Default::default() };
        assert!(sample_camera_pose(&mut rng, &p, [0.0; 3]).is_err());
        let mut cam = CameraGeometry::looking_along([0.0; 3], VERTICAL, 1000.0, 300.0, [4, 4]);
        cam.validate().unwrap();
        cam.u_axis = [1.0, 1.0, 0.0];
        assert!(cam.validate().is_err());
    }
}
