//! Distribution checks on the beam sampler, drawn through the same
//! per-ray streams the tracer uses.

use std::f64::consts::PI;

use radsim_core::rng::sample_stream;
use radsim_core::sampling::{draw_offset, rotate_by_offset, AngularOffset, RadiusSampler};
use radsim_core::{BeamKind, Vec3};

const WIDTH_DEG: f64 = 10.0;

fn offsets(kind: BeamKind, p: f64, n: u32, seed: u64) -> Vec<AngularOffset> {
    let sampler = RadiusSampler::new(kind, WIDTH_DEG.to_radians(), p).unwrap();
    (0..n).map(|i| draw_offset(&sampler, &mut sample_stream(seed, 0, i))).collect()
}

fn inside_fraction(offs: &[AngularOffset]) -> f64 {
    let h = 0.5 * WIDTH_DEG.to_radians();
    offs.iter().filter(|o| o.radius() <= h).count() as f64 / offs.len() as f64
}

#[test]
fn uniform_beams_stay_inside_the_cone() {
    for kind in [BeamKind::D1, BeamKind::D2] {
        let offs = offsets(kind, 0.9, 100_000, 1);
        assert_eq!(inside_fraction(&offs), 1.0, "{kind:?}");
    }
}

#[test]
fn normal_beams_hit_the_requested_containment() {
    for (kind, p) in [(BeamKind::D3, 0.9), (BeamKind::D4, 0.9), (BeamKind::D3, 0.85), (BeamKind::D4, 0.85)] {
        let frac = inside_fraction(&offsets(kind, p, 1_000_000, 2));
        assert!((frac - p).abs() <= 0.005, "{kind:?} P={p}: {frac}");
    }
}

/// Kolmogorov–Smirnov distance of sorted samples against a CDF.
fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn disk_uniform_radius_follows_quadratic_cdf() {
    let h = 0.5 * WIDTH_DEG.to_radians();
    let radii = offsets(BeamKind::D2, 0.9, 1_000_000, 3).iter().map(|o| o.radius()).collect();
    let d = ks(radii, |r| (r / h).powi(2));
    assert!(d < 0.002, "KS {d}");

    let radii = offsets(BeamKind::D1, 0.9, 200_000, 3).iter().map(|o| o.radius()).collect();
    let d = ks(radii, |r| r / h);
    assert!(d < 0.004, "KS {d}");
}

#[test]
fn offset_direction_is_isotropic() {
    const SECTORS: usize = 36;
    let offs = offsets(BeamKind::D2, 0.9, 360_000, 4);
    let mut counts = [0u32; SECTORS];
    for o in &offs {
        let w = o.inclination.atan2(o.azimuth) + PI;
        counts[((w / (2.0 * PI) * SECTORS as f64) as usize).min(SECTORS - 1)] += 1;
    }
    let expected = offs.len() as f64 / SECTORS as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 35 degrees of freedom, p = 0.001.
    assert!(chi2 < 66.62, "chi2 {chi2}");
}

#[test]
fn mean_sampled_direction_is_the_boresight() {
    let boresight = Vec3::new(1.0, 1.0, 0.0).normalize();
    let left = Vec3::Z.cross(boresight).normalize();
    for kind in [BeamKind::D1, BeamKind::D2, BeamKind::D3, BeamKind::D4] {
        let offs = offsets(kind, 0.9, 1_000_000, 5);
        let sum = offs.iter().fold(Vec3::ZERO, |acc, &o| acc + rotate_by_offset(boresight, left, o));
        let err = sum.angle_to(boresight).to_degrees();
        assert!(err < 0.05, "{kind:?}: {err} deg");
    }
}

#[test]
fn sampled_directions_are_unit_and_within_pi() {
    let boresight = Vec3::X;
    let left = Vec3::Y;
    for o in offsets(BeamKind::D3, 0.5, 10_000, 6) {
        let d = rotate_by_offset(boresight, left, o);
        assert!((d.length() - 1.0).abs() < 1e-12);
        let r = o.radius();
        if r <= PI {
            assert!((d.angle_to(boresight) - r).abs() < 1e-9);
        }
    }
}
