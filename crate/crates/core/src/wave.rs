//! Materials and the wave-physics kernel.
//!
//! A surface splits incident energy `E₀` into a reflected part `E₁` and a
//! transmitted part `E₂` (unpolarized Fresnel, with refractive index
//! `n = c / v`). How much of a part scatters into a direction at angle `ω`
//! from the mean (mirror or Snell) direction follows the lobe
//!
//! ```text
//! E(ω) = E · (A + B cos ω + S cos(ω)^C),   S = 1 - A - B
//! ```
//!
//! with an ambient term `A`, a Lambertian term `B` and a specular term of
//! hardness `C`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WaveError {
    #[error("material '{name}': {reason}")]
    InvalidMaterial { name: String, reason: String },
    #[error("material table: {0}")]
    InvalidTable(String),
    #[error("hit point coincides with the sensor origin")]
    CoincidentPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    /// Propagation speed inside the medium, m/ns.
    pub velocity: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

impl Material {
    pub fn new(name: impl Into<String>, velocity: f64, a: f64, b: f64, c: f64) -> Result<Self, WaveError> {
        let m = Self { name: name.into(), velocity, a, b, c };
        m.validate()?;
        Ok(m)
    }

    pub fn air() -> Self {
        Self { name: "air".into(), velocity: SPEED_OF_LIGHT, a: 0.0, b: 0.0, c: 1.0 }
    }

    /// Specular weight `S = 1 - A - B`.
    pub fn specular(&self) -> f64 {
        1.0 - self.a - self.b
    }

    pub fn validate(&self) -> Result<(), WaveError> {
        let fail = |reason: String| Err(WaveError::InvalidMaterial { name: self.name.clone(), reason });
        if !(self.velocity > 0.0 && self.velocity <= SPEED_OF_LIGHT) {
            return fail(format!("velocity {} m/ns outside (0, {SPEED_OF_LIGHT}]", self.velocity));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return fail(format!("A={} outside [0, 1]", self.a));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return fail(format!("B={} outside [0, 1]", self.b));
        }
        if !(self.a + self.b < 1.0) {
            return fail(format!("A+B={} must be < 1", self.a + self.b));
        }
        if !self.c.is_finite() {
            return fail(format!("C={} is not finite", self.c));
        }
        Ok(())
    }
}

/// Materials addressed by id; id 0 is always air.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialTable {
    materials: Vec<Material>,
}

impl Default for MaterialTable {
    fn default() -> Self {
        Self { materials: vec![Material::air()] }
    }
}

impl MaterialTable {
    pub const AIR: u32 = 0;

    /// Air followed by `materials` (ids 1, 2, ...).
    pub fn new(materials: impl IntoIterator<Item = Material>) -> Result<Self, WaveError> {
        let mut t = Self::default();
        for m in materials {
            t.push(m)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, m: Material) -> Result<u32, WaveError> {
        m.validate()?;
        if self.id_of(&m.name).is_some() {
            return Err(WaveError::InvalidTable(format!("duplicate material '{}'", m.name)));
        }
        self.materials.push(m);
        Ok(self.materials.len() as u32 - 1)
    }

    pub fn get(&self, id: u32) -> Option<&Material> {
        self.materials.get(id as usize)
    }

    pub fn get_mut(&mut self, id: u32) -> Option<&mut Material> {
        self.materials.get_mut(id as usize)
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.materials.iter().position(|m| m.name == name).map(|i| i as u32)
    }

    pub fn len(&self) -> usize {
        self.materials.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = &Material> {
        self.materials.iter()
    }

    pub fn validate(&self) -> Result<(), WaveError> {
        match self.materials.first() {
            Some(air) if air.velocity == SPEED_OF_LIGHT => {}
            _ => return Err(WaveError::InvalidTable("entry 0 must be air".into())),
        }
        self.materials.iter().try_for_each(Material::validate)
    }
}

/// Reflected and transmitted shares of an incident energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySplit {
    pub reflected: f64,
    pub refracted: f64,
}

/// Mirror direction; `n` must face the incoming ray.
#[inline]
pub fn reflect_dir(v0: Vec3, n: Vec3) -> Vec3 {
    v0 - n * (2.0 * v0.dot(n))
}

/// Snell transmission from a medium of speed `v1` into one of speed `v2`,
/// or `None` under total internal reflection. `n` must face the incoming ray.
#[inline]
pub fn snell_refract(v0: Vec3, n: Vec3, v1: f64, v2: f64) -> Option<Vec3> {
    let eta = v2 / v1; // n₁/n₂
    let cos_i = -v0.dot(n);
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i).max(0.0);
    if sin2_t > 1.0 {
        return None;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    Some((v0 * eta + n * (eta * cos_i - cos_t)).normalize())
}

/// Unpolarized Fresnel power reflectance at incidence angle `theta0`.
pub fn fresnel_reflectance(theta0: f64, v1: f64, v2: f64) -> f64 {
    let eta = v2 / v1;
    let (sin_i, cos_i) = theta0.sin_cos();
    let sin_t = eta * sin_i;
    if sin_t >= 1.0 {
        return 1.0;
    }
    let cos_t = (1.0 - sin_t * sin_t).sqrt();
    let rs = (eta * cos_i - cos_t) / (eta * cos_i + cos_t);
    let rp = (cos_i - eta * cos_t) / (cos_i + eta * cos_t);
    (0.5 * (rs * rs + rp * rp)).clamp(0.0, 1.0)
}

pub fn fresnel_split(theta0: f64, v1: f64, v2: f64, e0: f64) -> EnergySplit {
    let reflected = fresnel_reflectance(theta0, v1, v2) * e0;
    EnergySplit { reflected, refracted: e0 - reflected }
}

/// Lobe factor `A + B cos ω + S cos(ω)^C` for `ω` from the mean direction.
///
/// Written as `cᶜ + A(1 - cᶜ) + B(c - cᶜ)` so that `ω = 0` yields exactly 1
/// and `ω = π/2` exactly `A`. Beyond `π/2` only the ambient term remains.
#[inline]
pub fn lobe_factor(omega: f64, m: &Material) -> f64 {
    let omega = omega.abs();
    let c = if omega >= FRAC_PI_2 { 0.0 } else { omega.cos() };
    let spec = if c > 0.0 { c.powf(m.c) } else { 0.0 };
    (spec + m.a * (1.0 - spec) + m.b * (c - spec)).max(0.0)
}

/// Share of `e1` scattered at angle `omega` from the mean reflection.
#[inline]
pub fn reflection_energy(e1: f64, omega: f64, m: &Material) -> f64 {
    (e1 * lobe_factor(omega, m)).max(0.0)
}

/// Return angle when the signal retraces its path: between the mean
/// reflection and the reversed incidence direction.
#[inline]
pub fn return_angle_backpath(v0: Vec3, v1_mean: Vec3) -> f64 {
    v1_mean.angle_to(-v0)
}

/// Return angle when the signal flies straight from the hit back to the sensor.
pub fn return_angle_airpath(v1_mean: Vec3, hit_point: Vec3, sensor_origin: Vec3) -> Result<f64, WaveError> {
    let d = sensor_origin - hit_point;
    let len = d.length();
    if !(len > 0.0) {
        return Err(WaveError::CoincidentPoints);
    }
    Ok(v1_mean.angle_to(d / len))
}

/// Radar range equation: `Ps G² λ² σ / ((4π)³ R⁴)`.
pub fn free_space_return_power(ps: f64, gain: f64, lambda: f64, sigma: f64, range: f64) -> f64 {
    ps * gain * gain * lambda * lambda * sigma / ((4.0 * PI).powi(3) * range.powi(4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn incidence(theta: f64) -> (Vec3, Vec3) {
        // Plane z=0, normal +z, ray coming down in the x-z plane.
        let v0 = Vec3::new(theta.sin(), 0.0, -theta.cos());
        (v0, Vec3::Z)
    }

    #[test]
    fn material_constraints() {
        assert!(Material::new("ok", 0.1, 0.2, 0.3, 5.0).is_ok());
        let err = Material::new("bad", 0.1, 0.7, 0.5, 5.0).unwrap_err();
        assert!(err.to_string().contains("A+B"));
        assert!(Material::new("fast", 0.4, 0.1, 0.1, 1.0).is_err());
        assert!(Material::new("neg", 0.1, -0.1, 0.1, 1.0).is_err());
        assert!(Material::new("nanC", 0.1, 0.1, 0.1, f64::NAN).is_err());
    }

    #[test]
    fn table_reserves_air() {
        let t = MaterialTable::new([Material::new("wall", 0.1, 0.2, 0.3, 4.0).unwrap()]).unwrap();
        assert_eq!(t.get(0).unwrap().name, "air");
        assert_eq!(t.id_of("wall"), Some(1));
        assert!(t.validate().is_ok());
        let mut t2 = t.clone();
        assert!(t2.push(Material::new("wall", 0.1, 0.0, 0.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect_dir(-Vec3::Z, Vec3::Z), Vec3::Z);
        let (v0, n) = incidence(30f64.to_radians());
        let r = reflect_dir(v0, n);
        assert!((r.angle_to(n) - 30f64.to_radians()).abs() < 1e-12);
        assert!(r.x > 0.0);
    }

    #[test]
    fn refract_examples() {
        let t = snell_refract(-Vec3::Z, Vec3::Z, 0.3, 0.1).unwrap();
        assert!((t - (-Vec3::Z)).length() < 1e-15);

        let (v0, n) = incidence(30f64.to_radians());
        let t = snell_refract(v0, n, 0.3, 0.15).unwrap();
        let theta2 = t.angle_to(-n);
        assert!((theta2.sin() - 0.25).abs() < 1e-12);
        assert!((theta2.to_degrees() - 0.25f64.asin().to_degrees()).abs() < 1e-10);
        assert!((theta2.to_degrees() - 14.4775).abs() < 1e-4);

        let (v0, n) = incidence(60f64.to_radians());
        assert!(snell_refract(v0, n, 0.15, 0.3).is_none());
    }

    #[test]
    fn fresnel_examples() {
        let s = fresnel_split(0.0, 0.3, 0.15, 9.0);
        assert!((s.reflected - 1.0).abs() < 1e-12);
        assert!((s.refracted - 8.0).abs() < 1e-12);

        let s = fresnel_split(0.7, 0.2, 0.2, 1.0);
        assert_eq!(s.reflected, 0.0);
        assert_eq!(s.refracted, 1.0);

        let near_grazing = fresnel_reflectance(FRAC_PI_2 - 1e-6, 0.3, 0.15);
        assert!(near_grazing > 0.9999);
        // Total internal reflection.
        let s = fresnel_split(1.2, 0.15, 0.3, 2.0);
        assert_eq!((s.reflected, s.refracted), (2.0, 0.0));
    }

    #[test]
    fn fresnel_dips_at_high_contrast() {
        // n₁/n₂ = 4.8: reflectance falls between 0° and ~11°.
        assert!(fresnel_reflectance(10f64.to_radians(), 0.05, 0.24) < fresnel_reflectance(0.0, 0.05, 0.24));
    }

    #[test]
    fn lobe_endpoints_exact() {
        let m = Material::new("m", 0.1, 0.2, 0.35, 7.3).unwrap();
        assert_eq!(reflection_energy(3.0, 0.0, &m), 3.0);
        assert_eq!(reflection_energy(3.0, FRAC_PI_2, &m), 0.2 * 3.0);
        // Pure Lambertian.
        let lambert = Material { name: "l".into(), velocity: 0.1, a: 0.0, b: 1.0, c: 42.0 };
        let w = 0.7;
        assert!((reflection_energy(2.0, w, &lambert) - 2.0 * w.cos()).abs() < 1e-15);
    }

    #[test]
    fn return_angles() {
        let (v0, n) = incidence(0.0);
        assert!(return_angle_backpath(v0, reflect_dir(v0, n)).abs() < 1e-15);
        let (v0, n) = incidence(30f64.to_radians());
        let back = return_angle_backpath(v0, reflect_dir(v0, n));
        assert!((back - 60f64.to_radians()).abs() < 1e-12);

        let hit = Vec3::new(1.0, 2.0, 0.0);
        let r = Vec3::Z;
        assert!(return_angle_airpath(r, hit, hit + Vec3::Z * 3.0).unwrap().abs() < 1e-15);
        let perp = return_angle_airpath(r, hit, hit + Vec3::X).unwrap();
        assert!((perp - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(return_angle_airpath(r, hit, hit), Err(WaveError::CoincidentPoints));

        // Sensor along -v0 reproduces the back-path angle.
        let sensor = hit - v0 * 4.0;
        let air = return_angle_airpath(reflect_dir(v0, n), hit, sensor).unwrap();
        assert!((air - back).abs() < 1e-12);
    }

    #[test]
    fn range_equation() {
        let pe = free_space_return_power(1.0, 1.0, 1.0, 1.0, 1.0);
        assert!((pe - 1.0 / (4.0 * PI).powi(3)).abs() < 1e-18);
        // (4π)⁻³ = 5.0393022551874e-4
        assert!((pe - 5.039_302_255_187_42e-4).abs() < 1e-17);
        let far = free_space_return_power(1.0, 1.0, 1.0, 1.0, 2.0);
        assert!((far * 16.0 - pe).abs() < 1e-18);
        let long = free_space_return_power(1.0, 1.0, 2.0, 1.0, 1.0);
        assert!((long - 4.0 * pe).abs() < 1e-18);
    }

    fn unit_vec() -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
    }

    proptest! {
        #[test]
        fn fresnel_conserves_energy(theta in 0.0..FRAC_PI_2, v1 in 0.01..0.3f64, v2 in 0.01..0.3f64, e0 in 0.0..1e3f64) {
            let s = fresnel_split(theta, v1, v2, e0);
            prop_assert!(s.reflected >= 0.0 && s.refracted >= 0.0);
            prop_assert!((s.reflected + s.refracted - e0).abs() <= 1e-12 * e0.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn reflection_stays_in_plane(v in unit_vec(), n in unit_vec()) {
            let (v0, n) = if v.dot(n) < 0.0 { (v, n) } else { (v, -n) };
            prop_assume!(v0.dot(n) < -1e-6);
            let r = reflect_dir(v0, n);
            prop_assert!((r.length() - 1.0).abs() < 1e-12);
            prop_assert!(v0.cross(n).dot(r).abs() < 1e-12);
            prop_assert!((r.angle_to(n) - (-v0).angle_to(n)).abs() < 1e-9);
        }

        #[test]
        fn snell_is_reciprocal(v in unit_vec(), n in unit_vec(), v1 in 0.05..0.3f64, v2 in 0.05..0.3f64) {
            let (v0, n) = if v.dot(n) < 0.0 { (v, n) } else { (v, -n) };
            prop_assume!(v0.dot(n) < -1e-3);
            if let Some(t) = snell_refract(v0, n, v1, v2) {
                let back = snell_refract(-t, -n, v2, v1).unwrap();
                prop_assert!((back + v0).length() < 1e-9);
            }
        }

        // Unpolarized reflectance is monotone only up to an index contrast of
        // about 3.7; beyond that the Brewster dip of the p-component wins.
        #[test]
        fn fresnel_monotone_below_critical(v1 in 0.05..0.3f64, ratio in (1.0 / 3.5)..3.5f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let v2 = v1 * ratio;
            let critical = if v2 > v1 { (v1 / v2).asin() } else { FRAC_PI_2 };
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (t0, t1) = (lo * critical, hi * critical);
            prop_assert!(fresnel_reflectance(t0, v1, v2) <= fresnel_reflectance(t1, v1, v2) + 1e-12);
        }
    }
}
