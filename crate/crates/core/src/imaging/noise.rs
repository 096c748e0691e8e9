//! Range blur and the additive noise stages.

use serde::{Deserialize, Serialize};

use super::PolarImage;
use crate::rng::{derive_seed, hash_key, unit_f64};

/// One additive noise source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseModel {
    None,
    /// `amplitude · U[0, 1)` per cell.
    Uniform {
        amplitude: f64,
    },
    /// `amplitude · (perlin(a · freq_az, r · freq_range) + 1) / 2`.
    Perlin {
        amplitude: f64,
        freq_az: f64,
        freq_range: f64,
    },
}

impl NoiseModel {
    pub fn amplitude(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Uniform { amplitude } | NoiseModel::Perlin { amplitude, .. } => amplitude,
        }
    }

    pub fn set_amplitude(&mut self, value: f64) {
        match self {
            NoiseModel::None => {}
            NoiseModel::Uniform { amplitude } | NoiseModel::Perlin { amplitude, .. } => *amplitude = value,
        }
    }

    fn is_identity(&self) -> bool {
        self.amplitude() == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Gaussian sigma along range, in bins.
    pub range_blur_sigma: f64,
    pub system: NoiseModel,
    pub ambient: NoiseModel,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            range_blur_sigma: 2.0,
            system: NoiseModel::Uniform { amplitude: 2e-5 },
            ambient: NoiseModel::Perlin { amplitude: 5e-5, freq_az: 0.05, freq_range: 0.02 },
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// No blur, no noise.
    pub fn none() -> Self {
        Self { range_blur_sigma: 0.0, system: NoiseModel::None, ambient: NoiseModel::None, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.range_blur_sigma >= 0.0 && self.range_blur_sigma.is_finite()) {
            return Err(format!("range_blur_sigma={} must be finite and >= 0", self.range_blur_sigma));
        }
        for (stage, m) in [("system", &self.system), ("ambient", &self.ambient)] {
            let a = m.amplitude();
            if !(a >= 0.0 && a.is_finite()) {
                return Err(format!("{stage} amplitude={a} must be finite and >= 0"));
            }
            if let NoiseModel::Perlin { freq_az, freq_range, .. } = m {
                if !(freq_az.is_finite() && freq_range.is_finite()) {
                    return Err(format!("{stage} perlin frequencies must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Gaussian weights for offsets `-R..=R`, `R = ceil(4σ)`, unnormalized.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    (-radius..=radius).map(|k| (-(k * k) as f64 * inv).exp()).collect()
}

/// Blurs every column along range.
///
/// Each source bin spreads its value over the kernel taps that land inside
/// the column, renormalized over those taps, so column mass is preserved
/// even at the edges.
pub fn apply_range_blur(img: &PolarImage, sigma: f64) -> PolarImage {
    let mut out = img.clone();
    if sigma <= 0.0 {
        return out;
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let full: f64 = kernel.iter().sum();
    let n = img.n_range_bins() as i64;
    for (src, dst) in img.columns().zip(out.data_mut().chunks_exact_mut(n as usize)) {
        dst.fill(0.0);
        for (i, &v) in src.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let i = i as i64;
            let lo = (i - radius).max(0);
            let hi = (i + radius).min(n - 1);
            let taps = &kernel[(lo - i + radius) as usize..=(hi - i + radius) as usize];
            let norm = if lo == i - radius && hi == i + radius { full } else { taps.iter().sum() };
            let scale = v / norm;
            for (d, w) in dst[lo as usize..=hi as usize].iter_mut().zip(taps) {
                *d += scale * w;
            }
        }
    }
    out
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Dot product of the hashed lattice gradient at `(ix, iy)` with `(dx, dy)`.
#[inline]
fn grad(seed: u64, ix: i64, iy: i64, dx: f64, dy: f64) -> f64 {
    match hash_key(seed, &[ix as u64, iy as u64]) & 7 {
        0 => dx + dy,
        1 => dx - dy,
        2 => -dx + dy,
        3 => -dx - dy,
        4 => dx,
        5 => -dx,
        6 => dy,
        _ => -dy,
    }
}

/// Classic 2-D gradient noise with quintic fade, in `[-1, 1]`, zero on the
/// integer lattice.
pub fn perlin2(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (dx, dy) = (x - fx, y - fy);
    let (u, v) = (fade(dx), fade(dy));
    let n00 = grad(seed, ix, iy, dx, dy);
    let n10 = grad(seed, ix + 1, iy, dx - 1.0, dy);
    let n01 = grad(seed, ix, iy + 1, dx, dy - 1.0);
    let n11 = grad(seed, ix + 1, iy + 1, dx - 1.0, dy - 1.0);
    lerp(lerp(n00, n10, u), lerp(n01, n11, u), v).clamp(-1.0, 1.0)
}

const SYSTEM_STAGE: u64 = 1;
const AMBIENT_STAGE: u64 = 2;

fn add_stage(img: &mut PolarImage, model: &NoiseModel, seed: u64) {
    if model.is_identity() {
        return;
    }
    let n_r = img.n_range_bins();
    match *model {
        NoiseModel::None => {}
        NoiseModel::Uniform { amplitude } => {
            for (i, v) in img.data_mut().iter_mut().enumerate() {
                let (a, r) = ((i / n_r) as u64, (i % n_r) as u64);
                *v += amplitude * unit_f64(hash_key(seed, &[a, r]));
            }
        }
        NoiseModel::Perlin { amplitude, freq_az, freq_range } => {
            for (i, v) in img.data_mut().iter_mut().enumerate() {
                let (a, r) = ((i / n_r) as f64, (i % n_r) as f64);
                *v += amplitude * 0.5 * (perlin2(a * freq_az, r * freq_range, seed) + 1.0);
            }
        }
    }
}

/// Blur, then system noise, then ambient noise; negative cells clamp to 0.
pub fn add_noise(img: &PolarImage, cfg: &NoiseConfig) -> PolarImage {
    let mut out = apply_range_blur(img, cfg.range_blur_sigma);
    add_stage(&mut out, &cfg.system, derive_seed(cfg.seed, SYSTEM_STAGE));
    add_stage(&mut out, &cfg.ambient, derive_seed(cfg.seed, AMBIENT_STAGE));
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}
