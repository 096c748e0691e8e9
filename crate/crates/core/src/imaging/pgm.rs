//! Quantization and binary PGM (P5) I/O.
//!
//! The exported image is `n_azimuth` pixels wide and `n_range_bins` tall:
//! azimuth runs along x, range along y.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PolarImage;

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("malformed PGM at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("unsupported bit depth {0}; expected 8 or 16")]
    BitDepth(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QuantScale {
    Linear,
    /// `log(1 + v / v_scale)` compression.
    Log {
        v_scale: f64,
    },
}

/// Integer image, row-major (`data[y * width + x]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub data: Vec<u16>,
}

impl GrayImage {
    /// Back to a polar image (x = azimuth, y = range), values as floats.
    pub fn to_polar(&self, range_resolution: f64) -> PolarImage {
        let mut img = PolarImage::zeros(self.width, self.height, range_resolution);
        for y in 0..self.height {
            for x in 0..self.width {
                img.set(x, y, self.data[y * self.width + x] as f64);
            }
        }
        img
    }
}

/// Maps intensities to `0..=2^bit_depth - 1`, the image maximum going to the
/// top code. An all-zero image quantizes to zeros.
pub fn quantize(img: &PolarImage, bit_depth: u32, scale: QuantScale) -> Result<GrayImage, PgmError> {
    if bit_depth != 8 && bit_depth != 16 {
        return Err(PgmError::BitDepth(bit_depth));
    }
    let top = ((1u32 << bit_depth) - 1) as f64;
    let v_max = match img.max() {
        m if m > 0.0 => m,
        _ => 1.0,
    };
    let map = |v: f64| -> u16 {
        let x = match scale {
            QuantScale::Linear => v / v_max,
            QuantScale::Log { v_scale } => (v / v_scale).ln_1p() / (v_max / v_scale).ln_1p(),
        };
        (x.clamp(0.0, 1.0) * top).round() as u16
    };
    let (w, h) = img.dims();
    let mut data = vec![0u16; w * h];
    for (x, col) in img.columns().enumerate() {
        for (y, &v) in col.iter().enumerate() {
            data[y * w + x] = map(v);
        }
    }
    Ok(GrayImage { width: w, height: h, max_value: top as u16, data })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.max_value).into_bytes();
    if img.max_value < 256 {
        out.extend(img.data.iter().map(|&v| v as u8));
    } else {
        out.extend(img.data.iter().flat_map(|v| v.to_be_bytes()));
    }
    out
}

pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<(), PgmError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_pgm(img))?;
    f.flush()?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, PgmError> {
    decode_pgm(&std::fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T, PgmError> {
        Err(PgmError::Parse { offset: self.pos, reason: reason.into() })
    }

    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, PgmError> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err(format!("expected {what}"));
        }
        match std::str::from_utf8(&self.bytes[start..self.pos]).unwrap().parse() {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.err(format!("{what} out of range"))
            }
        }
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let mut c = Cursor { bytes, pos: 0 };
    if !bytes.starts_with(b"P5") {
        return c.err("missing P5 magic");
    }
    c.pos = 2;
    let width = c.number("width")?;
    let height = c.number("height")?;
    let max_value = c.number("maxval")?;
    if width == 0 || height == 0 {
        return c.err("zero image dimension");
    }
    if !(1..=65535).contains(&max_value) {
        return c.err(format!("maxval {max_value} outside 1..=65535"));
    }
    match bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => c.pos += 1,
        _ => return c.err("expected single whitespace after maxval"),
    }
    let n = width.checked_mul(height).ok_or(PgmError::Parse { offset: c.pos, reason: "size overflow".into() })?;
    let wide = max_value > 255;
    let need = if wide { 2 * n } else { n };
    let body = &bytes[c.pos..];
    if body.len() < need {
        c.pos = bytes.len();
        return c.err(format!("truncated pixel data: expected {need} bytes, found {}", body.len()));
    }
    if body.len() > need {
        c.pos += need;
        return c.err("trailing bytes after pixel data");
    }
    let data: Vec<u16> = if wide {
        body.chunks_exact(2).map(|p| u16::from_be_bytes([p[0], p[1]])).collect()
    } else {
        body.iter().map(|&b| b as u16).collect()
    };
    if let Some(i) = data.iter().position(|&v| v as usize > max_value) {
        c.pos += if wide { 2 * i } else { i };
        return c.err(format!("pixel value {} exceeds maxval {max_value}", data[i]));
    }
    Ok(GrayImage { width, height, max_value: max_value as u16, data })
}
