//! Cone sampling of ray directions around the beam boresight.
//!
//! A sample is an angular offset `(φ_az, θ_inc) = r·(cos ω, sin ω)` from the
//! mean ray, with `ω ~ U[-π, π)` and the radius `r` drawn by one of four
//! distributions:
//!
//! | kind | radius                                   | inside the cone |
//! |------|------------------------------------------|-----------------|
//! | D1   | `U · b/2`                                | always          |
//! | D2   | `√U · b/2` (uniform over the disk)       | always          |
//! | D3   | `N · (b/2) / (√2 erf⁻¹(P))`              | with prob. `P`  |
//! | D4   | `√(|N| (b/2)² / (√2 erf⁻¹(P)))`          | with prob. `P`  |
//!
//! where `b` is the full beam width, `U ~ U[0, 1)` and `N ~ N(0, 1)`.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("inside probability P={0} must lie in (0, 1)")]
    InvalidProbability(f64),
    #[error("beam width {0} rad must lie in (0, π)")]
    InvalidWidth(f64),
    #[error("beam needs at least one sample")]
    NoSamples,
    #[error("inverse_erf argument {0} outside (-1, 1)")]
    Domain(f64),
    #[error("up hint is parallel to the boresight")]
    ParallelUpHint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeamKind {
    D1,
    D2,
    D3,
    D4,
}

/// Emission cone of the antenna.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamModel {
    pub kind: BeamKind,
    /// Full cone width `b` in radians.
    pub width: f64,
    /// Probability `P` that a D3/D4 sample falls inside the cone.
    pub inside_prob: f64,
    /// Rays sampled per azimuth (`N_s`).
    pub n_samples: u32,
}

impl Default for BeamModel {
    fn default() -> Self {
        Self { kind: BeamKind::D3, width: 10f64.to_radians(), inside_prob: 0.9, n_samples: 50 }
    }
}

impl BeamModel {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if !(self.width > 0.0 && self.width < PI) {
            return Err(SamplingError::InvalidWidth(self.width));
        }
        if matches!(self.kind, BeamKind::D3 | BeamKind::D4) && !(self.inside_prob > 0.0 && self.inside_prob < 1.0) {
            return Err(SamplingError::InvalidProbability(self.inside_prob));
        }
        if self.n_samples == 0 {
            return Err(SamplingError::NoSamples);
        }
        Ok(())
    }

    /// Precomputes the radius sampler; validates the model.
    pub fn radius_sampler(&self) -> Result<RadiusSampler, SamplingError> {
        self.validate()?;
        RadiusSampler::new(self.kind, self.width, self.inside_prob)
    }
}

/// Angular offset from the mean ray.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AngularOffset {
    /// φ_az, radians; positive is counter-clockwise seen from the sensor's up axis.
    pub azimuth: f64,
    /// θ_inc, radians; positive tilts towards the up axis.
    pub inclination: f64,
}

impl AngularOffset {
    pub fn from_polar(r: f64, omega: f64) -> Self {
        let (s, c) = omega.sin_cos();
        Self { azimuth: r * c, inclination: r * s }
    }

    /// Angular distance from the mean ray, `|r|`.
    pub fn radius(&self) -> f64 {
        self.azimuth.hypot(self.inclination)
    }
}

/// Radius distribution with its constant factor precomputed.
#[derive(Debug, Clone, Copy)]
pub struct RadiusSampler {
    kind: BeamKind,
    half_width: f64,
    /// `√2 · erf⁻¹(P)`, the standard-normal quantile enclosing mass `P`.
    normal_scale: f64,
}

impl RadiusSampler {
    pub fn new(kind: BeamKind, width: f64, inside_prob: f64) -> Result<Self, SamplingError> {
        let normal_scale = match kind {
            BeamKind::D1 | BeamKind::D2 => 1.0,
            BeamKind::D3 | BeamKind::D4 => {
                if !(inside_prob > 0.0 && inside_prob < 1.0) {
                    return Err(SamplingError::InvalidProbability(inside_prob));
                }
                SQRT_2 * inverse_erf(inside_prob)?
            }
        };
        Ok(Self { kind, half_width: 0.5 * width, normal_scale })
    }

    /// Radius from explicit uniform `u ∈ [0, 1]` / normal `n` variates.
    pub fn radius_from(&self, u: f64, n: f64) -> f64 {
        let h = self.half_width;
        match self.kind {
            BeamKind::D1 => u * h,
            BeamKind::D2 => u.sqrt() * h,
            BeamKind::D3 => n * h / self.normal_scale,
            BeamKind::D4 => (n.abs() * h * h / self.normal_scale).sqrt(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            BeamKind::D1 | BeamKind::D2 => self.radius_from(rng.random::<f64>(), 0.0),
            BeamKind::D3 | BeamKind::D4 => self.radius_from(0.0, rng.sample(StandardNormal)),
        }
    }
}

/// Draws one radius for the given distribution.
pub fn sample_radius<R: Rng + ?Sized>(
    kind: BeamKind,
    width: f64,
    inside_prob: f64,
    rng: &mut R,
) -> Result<f64, SamplingError> {
    Ok(RadiusSampler::new(kind, width, inside_prob)?.draw(rng))
}

/// Draws `ω ~ U[-π, π)`, then the radius.
pub fn draw_offset<R: Rng + ?Sized>(sampler: &RadiusSampler, rng: &mut R) -> AngularOffset {
    let omega = rng.random::<f64>() * TAU - PI;
    let r = sampler.draw(rng);
    AngularOffset::from_polar(r, omega)
}

pub fn sample_offset<R: Rng + ?Sized>(beam: &BeamModel, rng: &mut R) -> Result<AngularOffset, SamplingError> {
    Ok(draw_offset(&beam.radius_sampler()?, rng))
}

/// Maps an angular offset into a world direction.
///
/// The result is the boresight rotated by `|r|` towards
/// `cos ω · left + sin ω · up`, so the angle between boresight and result is
/// exactly the offset radius. For small offsets this coincides with turning
/// by `φ_az` about the vertical axis and `θ_inc` about the horizontal one.
pub fn offset_to_direction(boresight: Vec3, up_hint: Vec3, off: AngularOffset) -> Result<Vec3, SamplingError> {
    let left = up_hint.cross(boresight);
    if left.length() <= 1e-9 * up_hint.length() {
        return Err(SamplingError::ParallelUpHint);
    }
    Ok(rotate_by_offset(boresight, left.normalize(), off))
}

/// [`offset_to_direction`] with a precomputed unit `left = normalize(up × boresight)`.
#[inline]
pub fn rotate_by_offset(boresight: Vec3, left: Vec3, off: AngularOffset) -> Vec3 {
    let rho = off.radius();
    if rho == 0.0 {
        return boresight;
    }
    let up = boresight.cross(left);
    let (s, c) = rho.sin_cos();
    let lateral = left * (off.azimuth / rho) + up * (off.inclination / rho);
    (boresight * c + lateral * s).normalize()
}

/// Error function, accurate to a few ulp over the whole real line.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    let v = if ax < 2.5 {
        // erf(x) = 2/√π e^{-x²} Σ 2ⁿ x^{2n+1} / (2n+1)!!, all terms positive.
        let x2 = ax * ax;
        let mut term = ax;
        let mut sum = ax;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= 2.0 * x2 / (2.0 * n + 1.0);
            sum += term;
            if term <= 1e-17 * sum {
                break;
            }
        }
        FRAC_2_SQRT_PI * (-x2).exp() * sum
    } else {
        1.0 - erfc_cf(ax)
    };
    v.copysign(x)
}

/// erfc for x ≥ 2.5 by its continued fraction (modified Lentz).
fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + 2/(x + ...)))))
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..300 {
        let a = 0.5 * k as f64;
        d = x + a * d;
        d = if d.abs() < TINY { 1.0 / TINY } else { 1.0 / d };
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (f * PI.sqrt())
}

/// Inverse error function on (-1, 1).
///
/// Giles' single-precision rational approximation seeds Newton iterations
/// against [`erf`]; the result satisfies `|erf(x) - p| < 1e-12`.
pub fn inverse_erf(p: f64) -> Result<f64, SamplingError> {
    if !(p > -1.0 && p < 1.0) {
        return Err(SamplingError::Domain(p));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    // erf(±6.5) rounds to ±1, so the root is always inside this bracket.
    let (mut lo, mut hi) = (-6.5f64, 6.5f64);
    let mut x = giles_inverse_erf(p);
    if !(x > lo && x < hi) {
        x = 0.0;
    }
    for _ in 0..100 {
        let err = erf(x) - p;
        if err == 0.0 {
            break;
        }
        if err < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = FRAC_2_SQRT_PI * (-x * x).exp();
        let mut next = x - err / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-16 * x.abs() {
            break;
        }
    }
    Ok(x)
}

fn giles_inverse_erf(p: f64) -> f64 {
    let mut w = -((1.0 - p) * (1.0 + p)).ln();
    let r = if w < 6.25 {
        w -= 3.125;
        let mut q = -3.6444120640178196996e-21;
        for c in [
            -1.685059138182016589e-19,
            1.2858480715256400167e-18,
            1.115787767802518096e-17,
            -1.333171662854620906e-16,
            2.0972767875968561637e-17,
            6.6376381343583238325e-15,
            -4.0545662729752068639e-14,
            -8.1519341976054721522e-14,
            2.6335093153082322977e-12,
            -1.2975133253453532498e-11,
            -5.4154120542946279317e-11,
            1.051212273321532285e-09,
            -4.1126339803469836976e-09,
            -2.9070369957882005086e-08,
            4.2347877827932403518e-07,
            -1.3654692000834678645e-06,
            -1.3882523362786468719e-05,
            0.0001867342080340571352,
            -0.00074070253416626697512,
            -0.0060336708714301490533,
            0.24015818242558961693,
            1.6536545626831027356,
        ] {
            q = c + q * w;
        }
        q
    } else if w < 16.0 {
        w = w.sqrt() - 3.25;
        let mut q = 2.2137376921775787049e-09;
        for c in [
            9.0756561938885390979e-08,
            -2.7517406297064545428e-07,
            1.8239629214389227755e-08,
            1.5027403968909827627e-06,
            -4.013867526981545969e-06,
            2.9234449089955446044e-06,
            1.2475304481671778723e-05,
            -4.7318229009055733981e-05,
            6.8284851459573175448e-05,
            2.4031110387097893999e-05,
            -0.0003550375203628474796,
            0.00095328937973738049703,
            -0.0016882755560235047313,
            0.0024914420961078508066,
            -0.0037512085075692412107,
            0.005370914553590063617,
            1.0052589676941592334,
            3.0838856104922207635,
        ] {
            q = c + q * w;
        }
        q
    } else {
        w = w.sqrt() - 5.0;
        let mut q = -2.7109920616438573243e-11;
        for c in [
            -2.5556418169965252055e-10,
            1.5076572693500548083e-09,
            -3.7894654401267369937e-09,
            7.6157012080783393804e-09,
            -1.4960026627149240478e-08,
            2.9147953450901080826e-08,
            -6.7711997758452339498e-08,
            2.2900482228026654717e-07,
            -9.9298272942317002539e-07,
            4.5260625972231537039e-06,
            -1.9681778105531670567e-05,
            7.5995277030017761139e-05,
            -0.00021503011930044477347,
            -0.00013871931833623122026,
            1.0103004648645343977,
            4.8499064014085844221,
        ] {
            q = c + q * w;
        }
        q
    };
    r * p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_stream;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Bisection on an independent erf implementation.
    fn bisect_inverse_erf(p: f64) -> f64 {
        let (mut lo, mut hi) = (-6.0f64, 6.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if libm::erf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn erf_matches_reference() {
        for i in -600..=600 {
            let x = i as f64 * 0.01;
            let ours = erf(x);
            let reference = libm::erf(x);
            assert!((ours - reference).abs() < 2e-15, "x={x}: {ours} vs {reference}");
        }
    }

    #[test]
    fn erf_matches_high_precision_values() {
        // 30-digit reference evaluations.
        let table = [
            (0.1, 0.1124629160182848922),
            (0.5, 0.52049987781304653768),
            (1.0, 0.84270079294971486934),
            (1.5, 0.96610514647531072707),
            (2.5, 0.99959304798255504106),
            (2.97, 0.99997333375127475608),
            (4.0, 0.99999998458274209972),
            (5.5, 0.99999999999999264215),
        ];
        for (x, e) in table {
            assert!((erf(x) - e).abs() <= 2.0 * f64::EPSILON * e, "x={x}");
            assert_eq!(erf(-x), -erf(x));
        }
    }

    #[test]
    fn inverse_erf_examples() {
        assert_eq!(inverse_erf(0.0).unwrap(), 0.0);
        let x = inverse_erf(0.9).unwrap();
        let oracle = bisect_inverse_erf(0.9);
        assert!((x - oracle).abs() < 1e-12);
        assert!((x - 1.16309).abs() < 1e-5);
        assert!((x - 1.163_087_153_676_674_2).abs() < 1e-15);
    }

    #[test]
    fn inverse_erf_domain() {
        for p in [1.0, -1.0, 1.5, f64::NAN] {
            assert!(matches!(inverse_erf(p), Err(SamplingError::Domain(_))));
        }
    }

    #[test]
    fn inverse_erf_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p: f64 = rng.random_range(-0.999999..0.999999);
            let x = inverse_erf(p).unwrap();
            assert!((libm::erf(x) - p).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn radius_examples() {
        let b = 10f64.to_radians();
        let d1 = RadiusSampler::new(BeamKind::D1, b, 0.9).unwrap();
        assert!((d1.radius_from(0.5, 0.0) - 2.5f64.to_radians()).abs() < 1e-15);
        let d2 = RadiusSampler::new(BeamKind::D2, b, 0.9).unwrap();
        assert!((d2.radius_from(0.25, 0.0) - 2.5f64.to_radians()).abs() < 1e-15);
        let d3 = RadiusSampler::new(BeamKind::D3, b, 0.9).unwrap();
        let expected = 5.0 / (SQRT_2 * bisect_inverse_erf(0.9));
        assert!((d3.radius_from(0.0, 1.0).to_degrees() - expected).abs() < 1e-10);
        assert!((expected - 3.0397).abs() < 1e-4);
    }

    #[test]
    fn bad_probability_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in [BeamKind::D3, BeamKind::D4] {
            for p in [0.0, 1.0, -0.1, 1.2] {
                assert_eq!(sample_radius(kind, 0.1, p, &mut rng), Err(SamplingError::InvalidProbability(p)));
            }
        }
        // D1/D2 ignore P.
        assert!(sample_radius(BeamKind::D1, 0.1, 5.0, &mut rng).is_ok());
    }

    #[test]
    fn offsets_from_polar() {
        let o = AngularOffset::from_polar(0.0, 1.234);
        assert_eq!((o.azimuth, o.inclination), (0.0, 0.0));
        let o = AngularOffset::from_polar(5f64.to_radians(), 0.0);
        assert_eq!(o.azimuth, 5f64.to_radians());
        assert_eq!(o.inclination, 0.0);
    }

    #[test]
    fn direction_examples() {
        let zero = AngularOffset::default();
        assert_eq!(offset_to_direction(Vec3::X, Vec3::Z, zero).unwrap(), Vec3::X);
        let quarter = AngularOffset { azimuth: 90f64.to_radians(), inclination: 0.0 };
        let d = offset_to_direction(Vec3::X, Vec3::Z, quarter).unwrap();
        assert!((d - Vec3::Y).length() < 1e-15);
        let up = AngularOffset { azimuth: 0.0, inclination: 90f64.to_radians() };
        let d = offset_to_direction(Vec3::X, Vec3::Z, up).unwrap();
        assert!((d - Vec3::Z).length() < 1e-15);
        assert_eq!(offset_to_direction(Vec3::X, Vec3::X * 2.0, quarter), Err(SamplingError::ParallelUpHint));
    }

    #[test]
    fn direction_angle_equals_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let bore = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.3).normalize();
            let off = AngularOffset::from_polar(rng.random_range(-3.0..3.0), rng.random_range(-PI..PI));
            let d = offset_to_direction(bore, Vec3::Z, off).unwrap();
            assert!((d.length() - 1.0).abs() < 1e-12);
            assert!((bore.angle_to(d) - off.radius()).abs() < 1e-9);
        }
    }

    #[test]
    fn d1_d2_samples_stay_inside() {
        let b = 10f64.to_radians();
        for kind in [BeamKind::D1, BeamKind::D2] {
            let s = RadiusSampler::new(kind, b, 0.9).unwrap();
            for i in 0..100_000 {
                let off = draw_offset(&s, &mut sample_stream(3, 0, i));
                assert!(off.radius() <= b / 2.0 + 1e-15);
            }
        }
    }

    #[test]
    fn d3_mean_ray_is_centered() {
        let b = 10f64.to_radians();
        let s = RadiusSampler::new(BeamKind::D3, b, 0.9).unwrap();
        let n = 200_000;
        let (mut sa, mut si) = (0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..n {
            let off = draw_offset(&s, &mut rng);
            sa += off.azimuth;
            si += off.inclination;
        }
        let mean = (sa / n as f64).hypot(si / n as f64);
        assert!(mean.to_degrees() < 0.05, "mean offset {}°", mean.to_degrees());
    }
}
