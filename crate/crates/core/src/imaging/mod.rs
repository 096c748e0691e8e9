//! Polar images: range binning, the noise stages and PGM export.
//!
//! A [`PolarImage`] has one column per azimuth and one row per range bin.
//! Columns are stored contiguously (`data[a * n_range_bins + r]`) since the
//! tracer fills and the range blur reads one column at a time.

mod noise;
mod pgm;

pub use noise::{add_noise, apply_range_blur, gaussian_kernel, perlin2, NoiseConfig, NoiseModel};
pub use pgm::{decode_pgm, encode_pgm, quantize, read_pgm, write_pgm, GrayImage, PgmError, QuantScale};

use serde::{Deserialize, Serialize};

use crate::tracer::ReturnSignal;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImageError {
    #[error("image dimensions {0}x{1} must be positive")]
    EmptyDimensions(usize, usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cell ({azimuth}, {range}) holds {value}; values must be finite and >= 0")]
    InvalidValue { azimuth: usize, range: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarImage {
    n_azimuth: usize,
    n_range_bins: usize,
    data: Vec<f64>,
    /// Meters per range bin.
    pub range_resolution: f64,
    /// Frame timestamp, seconds.
    pub timestamp: f64,
    pub seed: u64,
}

impl PolarImage {
    pub fn zeros(n_azimuth: usize, n_range_bins: usize, range_resolution: f64) -> Self {
        Self {
            n_azimuth,
            n_range_bins,
            data: vec![0.0; n_azimuth * n_range_bins],
            range_resolution,
            timestamp: 0.0,
            seed: 0,
        }
    }

    /// Wraps column-major data (`data[a * n_range_bins + r]`).
    pub fn from_data(
        n_azimuth: usize,
        n_range_bins: usize,
        range_resolution: f64,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if n_azimuth == 0 || n_range_bins == 0 {
            return Err(ImageError::EmptyDimensions(n_azimuth, n_range_bins));
        }
        if data.len() != n_azimuth * n_range_bins {
            return Err(ImageError::LengthMismatch { expected: n_azimuth * n_range_bins, got: data.len() });
        }
        let img = Self { n_azimuth, n_range_bins, data, range_resolution, timestamp: 0.0, seed: 0 };
        img.validate()?;
        Ok(img)
    }

    pub fn n_azimuth(&self) -> usize {
        self.n_azimuth
    }

    pub fn n_range_bins(&self) -> usize {
        self.n_range_bins
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_azimuth, self.n_range_bins)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, azimuth: usize, range: usize) -> f64 {
        self.data[azimuth * self.n_range_bins + range]
    }

    pub fn set(&mut self, azimuth: usize, range: usize, value: f64) {
        self.data[azimuth * self.n_range_bins + range] = value;
    }

    pub fn column(&self, azimuth: usize) -> &[f64] {
        let n = self.n_range_bins;
        &self.data[azimuth * n..(azimuth + 1) * n]
    }

    pub fn column_mut(&mut self, azimuth: usize) -> &mut [f64] {
        let n = self.n_range_bins;
        &mut self.data[azimuth * n..(azimuth + 1) * n]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.n_range_bins)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), ImageError> {
        match self.data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            None => Ok(()),
            Some(i) => Err(ImageError::InvalidValue {
                azimuth: i / self.n_range_bins,
                range: i % self.n_range_bins,
                value: self.data[i],
            }),
        }
    }
}

/// Adds signal energies into `column` at `floor(range / resolution)`;
/// signals past the last bin are dropped.
pub fn bin_into(column: &mut [f64], signals: &[ReturnSignal], range_resolution: f64) {
    for s in signals {
        let bin = (s.apparent_range / range_resolution).floor();
        if bin >= 0.0 && bin < column.len() as f64 {
            column[bin as usize] += s.energy;
        }
    }
}

/// One image column from a list of returns.
pub fn bin_signals(signals: &[ReturnSignal], n_range_bins: usize, range_resolution: f64) -> Vec<f64> {
    let mut column = vec![0.0; n_range_bins];
    bin_into(&mut column, signals, range_resolution);
    column
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracer::ReturnPath;

    fn sig(r: f64, e: f64) -> ReturnSignal {
        ReturnSignal { apparent_range: r, energy: e, bounces: 1, path: ReturnPath::Back }
    }

    #[test]
    fn binning_examples() {
        let col = bin_signals(&[sig(10.0, 0.7)], 40, 0.5);
        assert_eq!(col[20], 0.7);
        assert_eq!(col.iter().sum::<f64>(), 0.7);

        let col = bin_signals(&[sig(10.1, 0.25), sig(10.2, 0.5)], 40, 0.5);
        assert_eq!(col[20], 0.75);

        let col = bin_signals(&[sig(20.0, 1.0), sig(35.0, 1.0)], 40, 0.5);
        assert!(col.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layout_is_column_major() {
        let mut img = PolarImage::zeros(3, 4, 0.1);
        img.set(2, 1, 5.0);
        assert_eq!(img.data()[2 * 4 + 1], 5.0);
        assert_eq!(img.column(2), &[0.0, 5.0, 0.0, 0.0]);
        assert_eq!(img.max(), 5.0);
    }

    #[test]
    fn from_data_checks() {
        assert!(PolarImage::from_data(2, 2, 1.0, vec![0.0; 3]).is_err());
        assert!(PolarImage::from_data(0, 2, 1.0, vec![]).is_err());
        let err = PolarImage::from_data(2, 2, 1.0, vec![0.0, 0.0, -1.0, 0.0]).unwrap_err();
        assert!(matches!(err, ImageError::InvalidValue { azimuth: 1, range: 0, .. }));
    }
}
