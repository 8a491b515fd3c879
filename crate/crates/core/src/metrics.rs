//! PSNR and SSIM over single-channel rasters, plus a binary PGM (P5) codec.
//!
//! SSIM uses non-overlapping `window x window` tiles (default 8) with
//! population statistics and averages over all full tiles; partial tiles at
//! the right and bottom edges are ignored.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Serialize, Serializer};
use thiserror::Error;

pub const DEFAULT_SSIM_WINDOW: usize = 8;
pub const SSIM_SCHEME: &str = "non-overlapping 8x8 windows, population variance, c1=(0.01*max)^2, c2=(0.03*max)^2";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("dynamic ranges differ: {0} vs {1}")]
    RangeMismatch(f64, f64),
    #[error("raster is {h}x{w}, smaller than the {window}x{window} window")]
    TooSmall { h: usize, w: usize, window: usize },
    #[error("invalid raster: {0}")]
    Invalid(String),
    #[error("invalid PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    data: Vec<f64>,
    max_val: f64,
}

impl Raster {
    pub fn new(height: usize, width: usize, data: Vec<f64>, max_val: f64) -> Result<Self, MetricsError> {
        if height == 0 || width == 0 {
            return Err(MetricsError::Invalid("empty raster".into()));
        }
        if data.len() != height * width {
            return Err(MetricsError::Invalid(format!(
                "{} values for a {height}x{width} raster",
                data.len()
            )));
        }
        if !(max_val > 0.0 && max_val.is_finite()) {
            return Err(MetricsError::Invalid(format!("max_val {max_val} must be positive")));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=max_val).contains(*v)) {
            return Err(MetricsError::Invalid(format!("value {v} outside [0, {max_val}]")));
        }
        Ok(Self {
            height,
            width,
            data,
            max_val,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64, max_val: f64) -> Result<Self, MetricsError> {
        Self::new(height, width, vec![value; height * width], max_val)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_val(&self) -> f64 {
        self.max_val
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Reads a binary (P5) graymap; 8- and 16-bit samples.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        Self::decode_pgm(&fs::read(path)?)
    }

    pub fn decode_pgm(bytes: &[u8]) -> Result<Self, MetricsError> {
        let mut pos = 0;
        let mut token = || -> Result<String, MetricsError> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(MetricsError::Pgm("truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(MetricsError::Pgm("not a binary graymap (P5)".into()));
        }
        let mut num = |what: &str| -> Result<usize, MetricsError> {
            token()?
                .parse()
                .map_err(|_| MetricsError::Pgm(format!("bad {what}")))
        };
        let width = num("width")?;
        let height = num("height")?;
        let maxval = num("maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(MetricsError::Pgm(format!("maxval {maxval} out of range")));
        }
        // exactly one whitespace byte separates the header from the samples
        let start = pos + 1;
        let bps = if maxval < 256 { 1 } else { 2 };
        let need = width * height * bps;
        let body = bytes
            .get(start..start + need)
            .ok_or_else(|| MetricsError::Pgm(format!("expected {need} sample bytes")))?;
        let data = if bps == 1 {
            body.iter().map(|&b| b as f64).collect()
        } else {
            body.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                .collect()
        };
        Self::new(height, width, data, maxval as f64)
    }

    /// Samples are rounded to the nearest integer; `max_val` must be an integer <= 65535.
    pub fn encode_pgm(&self) -> Result<Vec<u8>, MetricsError> {
        let maxval = self.max_val.round();
        if maxval != self.max_val || maxval > 65535.0 {
            return Err(MetricsError::Pgm(format!("max_val {} not representable", self.max_val)));
        }
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, maxval as u32).into_bytes();
        for &v in &self.data {
            let s = v.round() as u16;
            if maxval < 256.0 {
                out.push(s as u8);
            } else {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        Ok(out)
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.encode_pgm()?)?;
        Ok(())
    }
}

fn same_dims(a: &Raster, b: &Raster) -> Result<(), MetricsError> {
    if a.height != b.height || a.width != b.width {
        return Err(MetricsError::DimensionMismatch(a.height, a.width, b.height, b.width));
    }
    Ok(())
}

pub fn mse(a: &Raster, b: &Raster) -> Result<f64, MetricsError> {
    same_dims(a, b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical rasters.
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64, MetricsError> {
    if a.max_val != b.max_val {
        return Err(MetricsError::RangeMismatch(a.max_val, b.max_val));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (a.max_val * a.max_val / m).log10())
}

/// Stabilizing constants `((0.01 max)^2, (0.03 max)^2)`.
pub fn default_constants(max_val: f64) -> (f64, f64) {
    ((0.01 * max_val).powi(2), (0.03 * max_val).powi(2))
}

pub fn ssim(a: &Raster, b: &Raster, c1: f64, c2: f64, window: usize) -> Result<f64, MetricsError> {
    same_dims(a, b)?;
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(MetricsError::Invalid("c1 and c2 must be positive".into()));
    }
    if window == 0 || a.height < window || a.width < window {
        return Err(MetricsError::TooSmall {
            h: a.height,
            w: a.width,
            window,
        });
    }
    let n = (window * window) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in (0..=a.height - window).step_by(window) {
        for c0 in (0..=a.width - window).step_by(window) {
            let cells = || (r0..r0 + window).flat_map(move |r| (c0..c0 + window).map(move |c| (r, c)));
            let (mut sa, mut sb) = (0.0, 0.0);
            for (r, c) in cells() {
                sa += a.at(r, c);
                sb += b.at(r, c);
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for (r, c) in cells() {
                let (da, db) = (a.at(r, c) - ma, b.at(r, c) - mb);
                va += da * da;
                vb += db * db;
                cov += da * db;
            }
            let (va, vb, cov) = (va / n, vb / n, cov / n);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM with the default constants and 8x8 windows.
pub fn ssim_default(a: &Raster, b: &Raster) -> Result<f64, MetricsError> {
    let (c1, c2) = default_constants(a.max_val);
    ssim(a, b, c1, c2, DEFAULT_SSIM_WINDOW)
}

/// PSNR value that serializes infinity as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr(pub f64);

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr_db: Psnr,
    pub ssim: f64,
    pub ssim_scheme: &'static str,
}

pub fn quality(a: &Raster, b: &Raster) -> Result<QualityReport, MetricsError> {
    Ok(QualityReport {
        mse: mse(a, b)?,
        psnr_db: Psnr(psnr(a, b)?),
        ssim: ssim_default(a, b)?,
        ssim_scheme: SSIM_SCHEME,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(h: usize, w: usize, data: &[f64]) -> Raster {
        Raster::new(h, w, data.to_vec(), 255.0).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = r(1, 2, &[0.0, 0.0]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &r(1, 2, &[3.0, 4.0])).unwrap(), 12.5);
        assert_eq!(mse(&r(1, 2, &[5.0, 9.0]), &r(1, 2, &[6.0, 10.0])).unwrap(), 1.0);
        assert!(matches!(mse(&a, &r(2, 1, &[0.0, 0.0])), Err(MetricsError::DimensionMismatch(..))));
    }

    #[test]
    fn psnr_examples() {
        let a = r(2, 2, &[10.0, 20.0, 30.0, 40.0]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = r(2, 2, &[11.0, 21.0, 31.0, 41.0]);
        assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-3);
        assert_eq!(psnr(&a, &b).unwrap(), 20.0 * 255f64.log10());
        let zero = Raster::filled(3, 3, 0.0, 255.0).unwrap();
        let full = Raster::filled(3, 3, 255.0, 255.0).unwrap();
        assert_eq!(psnr(&zero, &full).unwrap(), 0.0);
        let other = Raster::filled(3, 3, 0.0, 1023.0).unwrap();
        assert!(matches!(psnr(&zero, &other), Err(MetricsError::RangeMismatch(..))));
    }

    #[test]
    fn ssim_constant_closed_form() {
        let a = Raster::filled(16, 16, 100.0, 255.0).unwrap();
        let b = Raster::filled(16, 16, 110.0, 255.0).unwrap();
        let c1 = (0.01f64 * 255.0).powi(2);
        let expect = (2.0 * 100.0 * 110.0 + c1) / (100.0f64.powi(2) + 110.0f64.powi(2) + c1);
        let got = ssim_default(&a, &b).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.99548).abs() < 1e-4);
        assert_eq!(ssim_default(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_rejects_small_rasters() {
        let a = Raster::filled(7, 20, 1.0, 255.0).unwrap();
        assert!(matches!(ssim_default(&a, &a), Err(MetricsError::TooSmall { .. })));
    }

    #[test]
    fn raster_validation() {
        assert!(Raster::new(2, 2, vec![0.0; 3], 255.0).is_err());
        assert!(Raster::new(1, 1, vec![256.0], 255.0).is_err());
        assert!(Raster::new(1, 1, vec![-1.0], 255.0).is_err());
        assert!(Raster::new(1, 1, vec![1.0], 0.0).is_err());
    }

    #[test]
    fn pgm_roundtrip_8_and_16_bit() {
        let a = Raster::new(2, 3, vec![0.0, 1.0, 2.0, 253.0, 254.0, 255.0], 255.0).unwrap();
        assert_eq!(Raster::decode_pgm(&a.encode_pgm().unwrap()).unwrap(), a);
        let b = Raster::new(1, 2, vec![0.0, 1000.0], 1023.0).unwrap();
        assert_eq!(Raster::decode_pgm(&b.encode_pgm().unwrap()).unwrap(), b);
        let with_comment = b"P5\n# made by hand\n2 1\n255\n\x07\x09";
        let c = Raster::decode_pgm(with_comment).unwrap();
        assert_eq!(c.data(), &[7.0, 9.0]);
        assert!(Raster::decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(Raster::decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn psnr_sentinel_serializes_as_inf() {
        assert_eq!(serde_json::to_string(&Psnr(f64::INFINITY)).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&Psnr(30.5)).unwrap(), "30.5");
    }
}
