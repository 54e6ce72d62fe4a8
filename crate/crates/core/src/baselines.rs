//! Competing degradation characterizations: pooled pixels, Sobel and Laplace
//! response histograms, and a radial Fourier magnitude profile.

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corpus::GrayImage;
use crate::{Error, Result};

pub const DEFAULT_POOL: usize = 16;
pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_RINGS: usize = 32;

/// Largest Sobel magnitude an image on the 0–255 scale can produce.
pub const SOBEL_MAX: f64 = 1442.497_833_620_557_8; // 1020·√2
/// Largest absolute 4-neighbour Laplacian response.
pub const LAPLACE_MAX: f64 = 1020.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMethod {
    Raw,
    Sobel,
    Laplace,
    Fourier,
    MasGlcm,
}

impl FeatureMethod {
    pub const ALL: [FeatureMethod; 5] = [
        FeatureMethod::Raw,
        FeatureMethod::Sobel,
        FeatureMethod::Laplace,
        FeatureMethod::Fourier,
        FeatureMethod::MasGlcm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMethod::Raw => "raw",
            FeatureMethod::Sobel => "sobel",
            FeatureMethod::Laplace => "laplace",
            FeatureMethod::Fourier => "fourier",
            FeatureMethod::MasGlcm => "mas-glcm",
        }
    }
}

impl fmt::Display for FeatureMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown feature method {s:?}")))
    }
}

/// Fixed-length characterization of one image under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub method: FeatureMethod,
    pub values: Vec<f64>,
    pub source_id: String,
}

impl FeatureVector {
    pub fn new(method: FeatureMethod, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self {
            method,
            values,
            source_id: String::new(),
        }
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Average-pools to a `pool`×`pool` grid and scales to `[0, 1]`.
pub fn raw_feature(img: &GrayImage, pool: usize) -> Result<FeatureVector> {
    let (w, h) = (img.width(), img.height());
    if pool == 0 || w % pool != 0 || h % pool != 0 {
        return Err(Error::arg(format!(
            "pool grid {pool} does not divide a {w}x{h} image"
        )));
    }
    let (bw, bh) = (w / pool, h / pool);
    let norm = (bw * bh) as f64 * 255.0;
    let mut values = vec![0.0; pool * pool];
    for y in 0..h {
        for x in 0..w {
            values[(y / bh) * pool + x / bw] += img.get(x, y);
        }
    }
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(FeatureVector::new(FeatureMethod::Raw, values))
}

/// 3×3 Sobel gradient magnitude with replicate padding.
pub fn sobel_magnitude(img: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            out.push(gx.hypot(gy));
        }
    }
    out
}

/// Absolute 4-neighbour Laplacian response with replicate padding.
pub fn laplace_response(img: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let r = p(0, -1) + p(-1, 0) + p(1, 0) + p(0, 1) - 4.0 * p(0, 0);
            out.push(r.abs());
        }
    }
    out
}

fn histogram(values: &[f64], max: f64, bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    let scale = bins as f64 / max;
    for &v in values {
        let b = ((v * scale) as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let n = values.len() as f64;
    hist.iter_mut().for_each(|c| *c /= n);
    hist
}

pub fn sobel_feature(img: &GrayImage, bins: usize) -> Result<FeatureVector> {
    if bins < 2 {
        return Err(Error::arg("histogram needs at least 2 bins"));
    }
    Ok(FeatureVector::new(
        FeatureMethod::Sobel,
        histogram(&sobel_magnitude(img), SOBEL_MAX, bins),
    ))
}

pub fn laplace_feature(img: &GrayImage, bins: usize) -> Result<FeatureVector> {
    if bins < 2 {
        return Err(Error::arg("histogram needs at least 2 bins"));
    }
    Ok(FeatureVector::new(
        FeatureMethod::Laplace,
        histogram(&laplace_response(img), LAPLACE_MAX, bins),
    ))
}

/// Unnormalized 2-D DFT, row-major, same layout as the input.
pub fn dft2(img: &GrayImage) -> Vec<Complex<f64>> {
    let (w, h) = (img.width(), img.height());
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = img.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    let row_fft = planner.plan_fft_forward(w);
    for row in buf.chunks_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    buf
}

/// Radial spectrum profile: mean unitary DFT magnitude in each of `rings`
/// equal-width annuli around DC (DC itself excluded), `log1p`-compressed,
/// followed by `log1p` of the mean squared pixel value.
pub fn fourier_feature(img: &GrayImage, rings: usize) -> Result<FeatureVector> {
    if rings < 2 {
        return Err(Error::arg("radial profile needs at least 2 rings"));
    }
    let (w, h) = (img.width(), img.height());
    let spectrum = dft2(img);
    let n = (w * h) as f64;
    let energy: f64 = spectrum.iter().map(|c| c.norm_sqr()).sum::<f64>() / n;
    debug_assert!({
        let direct: f64 = img.data().iter().map(|v| v * v).sum();
        (energy - direct).abs() <= 1e-9 * direct.max(1.0)
    });

    let max_r = ring_radius_limit(w, h);
    let mut sums = vec![0.0; rings];
    let mut counts = vec![0usize; rings];
    let unitary = n.sqrt();
    for (ky, row) in spectrum.chunks(w).enumerate() {
        for (kx, c) in row.iter().enumerate() {
            if kx == 0 && ky == 0 {
                continue;
            }
            let r = centered_radius(kx, ky, w, h);
            let ring = ((r / max_r * rings as f64) as usize).min(rings - 1);
            sums[ring] += c.norm() / unitary;
            counts[ring] += 1;
        }
    }
    let mut values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { (s / c as f64).ln_1p() })
        .collect();
    values.push((energy / n).ln_1p());
    Ok(FeatureVector::new(FeatureMethod::Fourier, values))
}

/// Distance of frequency bin `(kx, ky)` from DC after centering.
pub fn centered_radius(kx: usize, ky: usize, w: usize, h: usize) -> f64 {
    let fx = if kx <= w / 2 { kx as f64 } else { kx as f64 - w as f64 };
    let fy = if ky <= h / 2 { ky as f64 } else { ky as f64 - h as f64 };
    fx.hypot(fy)
}

/// Radius covered by the outermost ring (half the spectrum diagonal).
pub fn ring_radius_limit(w: usize, h: usize) -> f64 {
    ((w / 2) as f64).hypot((h / 2) as f64) + 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_examples() {
        let white = GrayImage::filled(32, 32, 255.0).unwrap();
        let f = raw_feature(&white, 16).unwrap();
        assert_eq!(f.len(), 256);
        assert!(f.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let img = GrayImage::new(2, 2, vec![0.0, 255.0, 0.0, 255.0]).unwrap();
        let f = raw_feature(&img, 1).unwrap();
        assert_eq!(f.values, vec![0.5]);

        let ramp = GrayImage::from_fn(4, 4, |x, y| (x + 4 * y) as f64 * 10.0);
        let f = raw_feature(&ramp, 1).unwrap();
        assert!((f.values[0] - ramp.mean() / 255.0).abs() < 1e-15);
        assert!(raw_feature(&ramp, 3).is_err());
    }

    #[test]
    fn constant_image_histograms() {
        let img = GrayImage::filled(16, 16, 90.0).unwrap();
        for f in [sobel_feature(&img, 64).unwrap(), laplace_feature(&img, 64).unwrap()] {
            assert_eq!(f.values[0], 1.0);
            assert_eq!(f.values.iter().sum::<f64>(), 1.0);
        }
        assert!(sobel_feature(&img, 1).is_err());
        assert!(laplace_feature(&img, 1).is_err());
    }

    #[test]
    fn sobel_step_edge() {
        let img = GrayImage::from_fn(8, 5, |x, _| if x < 4 { 0.0 } else { 255.0 });
        let mag = sobel_magnitude(&img);
        for y in 0..5 {
            for x in 0..8 {
                let expected = if x == 3 || x == 4 { 1020.0 } else { 0.0 };
                assert_eq!(mag[y * 8 + x], expected, "at ({x}, {y})");
            }
        }
        let f = sobel_feature(&img, 64).unwrap();
        assert!((f.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn laplace_single_bright_pixel() {
        let img = GrayImage::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 255.0 } else { 0.0 });
        let r = laplace_response(&img);
        assert_eq!(r[2 * 5 + 2], 1020.0);
        for (x, y) in [(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(r[y * 5 + x], 255.0);
        }
        assert_eq!(r[0], 0.0);
        let f = laplace_feature(&img, 16).unwrap();
        assert!((f.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fourier_constant_image() {
        let img = GrayImage::filled(16, 16, 100.0).unwrap();
        let f = fourier_feature(&img, 8).unwrap();
        assert_eq!(f.len(), 9);
        assert!(f.values[..8].iter().all(|&v| v.abs() < 1e-9));
        assert!((f.values[8] - (100.0f64 * 100.0).ln_1p()).abs() < 1e-9);
        assert!(fourier_feature(&img, 1).is_err());
    }

    #[test]
    fn parseval_holds() {
        let img = crate::corpus::synthetic_scene(5, 32);
        let spec = dft2(&img);
        let lhs: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / (32.0 * 32.0);
        let rhs: f64 = img.data().iter().map(|v| v * v).sum();
        assert!((lhs - rhs).abs() < 1e-9 * rhs);
    }

    #[test]
    fn cosine_lands_in_its_ring() {
        let (n, k, rings) = (64usize, 10usize, 16usize);
        let img = GrayImage::from_fn(n, n, |x, _| {
            128.0 + 100.0 * (std::f64::consts::TAU * k as f64 * x as f64 / n as f64).cos()
        });
        let f = fourier_feature(&img, rings).unwrap();
        let expected = (k as f64 / ring_radius_limit(n, n) * rings as f64) as usize;
        let (argmax, _) = f.values[..rings]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(argmax, expected);
        for (i, v) in f.values[..rings].iter().enumerate() {
            if i != expected {
                assert!(*v < 1e-6, "ring {i} has {v}");
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in FeatureMethod::ALL {
            assert_eq!(m.as_str().parse::<FeatureMethod>().unwrap(), m);
        }
        assert!("gabor".parse::<FeatureMethod>().is_err());
    }
}
