//! Structural similarity and mutual information between polar images.

use serde::{Deserialize, Serialize};

use crate::imaging::PolarImage;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("invalid metric config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Side of the square box window; odd.
    pub ssim_window: usize,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
    /// Dynamic range `L`. When unset, the larger of the two images'
    /// value ranges (1 if both are constant).
    pub dynamic_range: Option<f64>,
    pub mi_bins: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { ssim_window: 11, ssim_k1: 0.01, ssim_k2: 0.03, dynamic_range: None, mi_bins: 64 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        let fail = |m: String| Err(MetricError::Config(m));
        if self.ssim_window < 3 || self.ssim_window.is_multiple_of(2) {
            return fail(format!("ssim_window={} must be odd and >= 3", self.ssim_window));
        }
        if !(self.ssim_k1 > 0.0 && self.ssim_k2 > 0.0) {
            return fail("ssim_k1 and ssim_k2 must be > 0".into());
        }
        if self.mi_bins < 2 {
            return fail(format!("mi_bins={} must be >= 2", self.mi_bins));
        }
        if let Some(l) = self.dynamic_range {
            if !(l > 0.0 && l.is_finite()) {
                return fail(format!("dynamic_range={l} must be > 0"));
            }
        }
        Ok(())
    }
}

fn check_dims(a: &PolarImage, b: &PolarImage) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimensionMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Box sums of side `w` over a `rows × cols` row-major field, valid
/// positions only: output is `(rows - w + 1) × (cols - w + 1)`.
fn box_sums(field: &[f64], rows: usize, cols: usize, w: usize) -> Vec<f64> {
    let out_cols = cols - w + 1;
    let mut horiz = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let row = &field[r * cols..(r + 1) * cols];
        let mut s: f64 = row[..w].iter().sum();
        horiz[r * out_cols] = s;
        for c in 1..out_cols {
            s += row[c + w - 1] - row[c - 1];
            horiz[r * out_cols + c] = s;
        }
    }
    let out_rows = rows - w + 1;
    let mut out = vec![0.0; out_rows * out_cols];
    for c in 0..out_cols {
        let mut s: f64 = (0..w).map(|r| horiz[r * out_cols + c]).sum();
        out[c] = s;
        for r in 1..out_rows {
            s += horiz[(r + w - 1) * out_cols + c] - horiz[(r - 1) * out_cols + c];
            out[r * out_cols + c] = s;
        }
    }
    out
}

/// Mean SSIM over all box windows that fit inside the image. The window
/// shrinks to the image size for images smaller than it.
pub fn ssim(a: &PolarImage, b: &PolarImage, cfg: &MetricConfig) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_dims(a, b)?;
    if a.data() == b.data() {
        return Ok(1.0);
    }
    let (rows, cols) = a.dims();
    let w = cfg.ssim_window.min(rows).min(cols);
    let (lo_a, hi_a) = min_max(a.data());
    let (lo_b, hi_b) = min_max(b.data());
    let l = cfg.dynamic_range.unwrap_or_else(|| match (hi_a - lo_a).max(hi_b - lo_b) {
        r if r > 0.0 => r,
        _ => 1.0,
    });
    let c1 = (cfg.ssim_k1 * l).powi(2);
    let c2 = (cfg.ssim_k2 * l).powi(2);

    // Centering keeps the windowed second moments well conditioned.
    let ma = a.data().iter().sum::<f64>() / a.data().len() as f64;
    let mb = b.data().iter().sum::<f64>() / b.data().len() as f64;
    let ca: Vec<f64> = a.data().iter().map(|v| v - ma).collect();
    let cb: Vec<f64> = b.data().iter().map(|v| v - mb).collect();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let sa = box_sums(&ca, rows, cols, w);
    let sb = box_sums(&cb, rows, cols, w);
    let saa = box_sums(&prod(&ca, &ca), rows, cols, w);
    let sbb = box_sums(&prod(&cb, &cb), rows, cols, w);
    let sab = box_sums(&prod(&ca, &cb), rows, cols, w);

    let n = (w * w) as f64;
    let mut total = 0.0;
    for i in 0..sa.len() {
        let (da, db) = (sa[i] / n, sb[i] / n);
        let (mu_a, mu_b) = (ma + da, mb + db);
        let var_a = (saa[i] / n - da * da).max(0.0);
        let var_b = (sbb[i] / n - db * db).max(0.0);
        let cov = sab[i] / n - da * db;
        total +=
            ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
    Ok((total / sa.len() as f64).clamp(-1.0, 1.0))
}

/// Bin index per value after independent min-max scaling; a constant image
/// falls entirely into bin 0.
fn bin_indices(v: &[f64], bins: usize) -> Vec<usize> {
    let (lo, hi) = min_max(v);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0; v.len()];
    }
    let scale = bins as f64 / span;
    v.iter().map(|&x| (((x - lo) * scale) as usize).min(bins - 1)).collect()
}

fn entropy_of_counts(counts: &[u64], total: f64) -> f64 {
    counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / total * (total / c as f64).ln()).sum()
}

/// Shannon entropy (nats) of the binned marginal histogram.
pub fn entropy(a: &PolarImage, cfg: &MetricConfig) -> Result<f64, MetricError> {
    cfg.validate()?;
    let mut counts = vec![0u64; cfg.mi_bins];
    for i in bin_indices(a.data(), cfg.mi_bins) {
        counts[i] += 1;
    }
    Ok(entropy_of_counts(&counts, a.data().len() as f64))
}

/// Mutual information (nats) from the joint histogram of the two images.
pub fn mutual_information(a: &PolarImage, b: &PolarImage, cfg: &MetricConfig) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_dims(a, b)?;
    let k = cfg.mi_bins;
    let ia = bin_indices(a.data(), k);
    let ib = bin_indices(b.data(), k);
    let mut joint = vec![0u64; k * k];
    let (mut pa, mut pb) = (vec![0u64; k], vec![0u64; k]);
    for (&x, &y) in ia.iter().zip(&ib) {
        joint[x * k + y] += 1;
        pa[x] += 1;
        pb[y] += 1;
    }
    let n = ia.len() as f64;
    let mut mi = 0.0;
    for x in 0..k {
        for y in 0..k {
            let c = joint[x * k + y];
            if c == 0 {
                continue;
            }
            let c = c as f64;
            mi += c / n * (c * n / (pa[x] as f64 * pb[y] as f64)).ln();
        }
    }
    Ok(mi.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, w: usize, h: usize) -> PolarImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolarImage::from_data(w, h, 0.1, (0..w * h).map(|_| rng.random()).collect()).unwrap()
    }

    fn constant(v: f64, w: usize, h: usize) -> PolarImage {
        PolarImage::from_data(w, h, 0.1, vec![v; w * h]).unwrap()
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let cfg = MetricConfig::default();
        let a = random(1, 30, 40);
        let b = random(2, 30, 40);
        assert_eq!(ssim(&a, &a, &cfg).unwrap(), 1.0);
        let ab = ssim(&a, &b, &cfg).unwrap();
        let ba = ssim(&b, &a, &cfg).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 0.2);
    }

    #[test]
    fn ssim_constant_closed_form() {
        let cfg = MetricConfig { dynamic_range: Some(1.0), ..MetricConfig::default() };
        let (p, q) = (0.3, 0.7);
        let c1 = (0.01f64).powi(2);
        let expect = (2.0 * p * q + c1) / (p * p + q * q + c1);
        let got = ssim(&constant(p, 20, 20), &constant(q, 20, 20), &cfg).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        // Both ranges zero: L falls back to 1.
        let got = ssim(&constant(p, 20, 20), &constant(q, 20, 20), &MetricConfig::default()).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let cfg = MetricConfig { ssim_window: 3, dynamic_range: Some(1.0), ..MetricConfig::default() };
        let a = random(5, 7, 6);
        let b = random(6, 7, 6);
        let (rows, cols) = a.dims();
        let (c1, c2) = (1e-4, 9e-4);
        let mut total = 0.0;
        let mut count = 0.0;
        for r in 0..=rows - 3 {
            for c in 0..=cols - 3 {
                let cells: Vec<(f64, f64)> = (0..3)
                    .flat_map(|i| (0..3).map(move |j| (r + i, c + j)))
                    .map(|(i, j)| (a.data()[i * cols + j], b.data()[i * cols + j]))
                    .collect();
                let mu_a = cells.iter().map(|p| p.0).sum::<f64>() / 9.0;
                let mu_b = cells.iter().map(|p| p.1).sum::<f64>() / 9.0;
                let va = cells.iter().map(|p| (p.0 - mu_a).powi(2)).sum::<f64>() / 9.0;
                let vb = cells.iter().map(|p| (p.1 - mu_b).powi(2)).sum::<f64>() / 9.0;
                let cv = cells.iter().map(|p| (p.0 - mu_a) * (p.1 - mu_b)).sum::<f64>() / 9.0;
                total +=
                    (2.0 * mu_a * mu_b + c1) * (2.0 * cv + c2) / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
        assert!((ssim(&a, &b, &cfg).unwrap() - total / count).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let cfg = MetricConfig::default();
        let (a, b) = (random(1, 10, 10), random(1, 10, 11));
        assert!(ssim(&a, &b, &cfg).is_err());
        assert!(mutual_information(&a, &b, &cfg).is_err());
    }

    #[test]
    fn entropy_examples() {
        let cfg = MetricConfig::default();
        assert_eq!(entropy(&constant(3.0, 5, 5), &cfg).unwrap(), 0.0);
        let two = PolarImage::from_data(2, 2, 0.1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((entropy(&two, &cfg).unwrap() - 2f64.ln()).abs() < 1e-15);
        let r = random(3, 100, 100);
        assert!(entropy(&r, &cfg).unwrap() <= 64f64.ln() + 1e-12);
    }

    #[test]
    fn mi_examples() {
        let cfg = MetricConfig::default();
        assert_eq!(mutual_information(&constant(1.0, 8, 8), &constant(2.0, 8, 8), &cfg).unwrap(), 0.0);
        let a = random(7, 50, 60);
        let mi = mutual_information(&a, &a, &cfg).unwrap();
        assert!((mi - entropy(&a, &cfg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn independent_images_have_small_mi() {
        let cfg = MetricConfig::default();
        let a = random(11, 400, 1000);
        let b = random(12, 400, 1000);
        let mi = mutual_information(&a, &b, &cfg).unwrap();
        // Shuffled-pairs oracle: MI of `a` against a permutation of itself.
        let mut shuffled = a.data().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let s = PolarImage::from_data(400, 1000, 0.1, shuffled).unwrap();
        let bias = mutual_information(&a, &s, &cfg).unwrap();
        assert!(mi < 0.02 && bias < 0.02, "mi {mi}, shuffled {bias}");
        assert!((mi - bias).abs() < 0.005);
    }

    #[test]
    fn mi_degrades_with_noise() {
        let cfg = MetricConfig::default();
        for seed in 0..5 {
            let a = random(100 + seed, 60, 80);
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let noise: Vec<f64> = (0..a.data().len()).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut last = f64::INFINITY;
            for s in [0.0, 0.1, 0.2, 0.4] {
                let data = a.data().iter().zip(&noise).map(|(v, n)| (v + s * n).max(0.0)).collect();
                let noisy = PolarImage::from_data(60, 80, 0.1, data).unwrap();
                let mi = mutual_information(&a, &noisy, &cfg).unwrap();
                assert!(mi <= last + 1e-12, "seed {seed} sigma {s}: {mi} > {last}");
                last = mi;
            }
        }
    }

    proptest! {
        #[test]
        fn mi_symmetric_bounded(s1 in any::<u64>(), s2 in any::<u64>()) {
            let cfg = MetricConfig::default();
            let a = random(s1, 20, 30);
            let b = random(s2, 20, 30);
            let ab = mutual_information(&a, &b, &cfg).unwrap();
            let ba = mutual_information(&b, &a, &cfg).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab >= 0.0);
            let h = entropy(&a, &cfg).unwrap().min(entropy(&b, &cfg).unwrap());
            prop_assert!(ab <= h + 1e-9);
        }

        #[test]
        fn ssim_bounded(s1 in any::<u64>(), s2 in any::<u64>()) {
            let cfg = MetricConfig::default();
            let v = ssim(&random(s1, 15, 25), &random(s2, 15, 25), &cfg).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }
}
