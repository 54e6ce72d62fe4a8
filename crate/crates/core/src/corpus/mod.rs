//! Image ingestion and the pixel-level substrate every other module consumes.
//!
//! Images are kept as real-valued intensities on the 0–255 scale so that
//! degradation operators compose without rounding; rounding happens only in
//! [`quantize`] and at PNG export.

mod fixtures;
mod manifest;

use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::{Error, Result};

pub use fixtures::synthetic_scene;
pub use manifest::{CorpusManifest, ManifestEntry};

/// PSNR reported for identical images, in decibels.
pub const PSNR_IDENTICAL_DB: f64 = 99.0;

/// BT.601 luma weights applied to RGB inputs.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Default number of gray levels used by [`quantize`] callers.
pub const DEFAULT_LEVELS: usize = 32;

/// Default center-crop side length.
pub const DEFAULT_CROP: usize = 256;

/// Row-major grayscale raster with intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "empty image {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 255.0) {
            return Err(Error::InvalidImage(format!(
                "intensity {v} outside [0, 255]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from `f(x, y)`; values are clamped into `[0, 255]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(clamp_intensity(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps already-clamped data. Callers inside the crate guarantee the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_gray8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(width, height, pixels.iter().map(|&p| f64::from(p)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the border (replicate padding).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Applies `f` to every pixel and clamps the result.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|&v| clamp_intensity(f(v))).collect(),
        )
    }

    /// Rounds to 8-bit pixels, the representation used for export.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v.round() as u8).collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_gray8())
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::Decode {
                    path: path.to_path_buf(),
                    message: other.to_string(),
                },
            })
    }
}

#[inline]
pub(crate) fn clamp_intensity(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 255.0)
    }
}

/// Grid of gray levels in `[0, levels)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedImage {
    width: usize,
    height: usize,
    levels: usize,
    data: Vec<u16>,
}

impl QuantizedImage {
    pub fn new(width: usize, height: usize, levels: usize, data: Vec<u16>) -> Result<Self> {
        if levels < 2 || levels > usize::from(u16::MAX) + 1 {
            return Err(Error::arg(format!("gray level count {levels} out of range")));
        }
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| usize::from(v) >= levels) {
            return Err(Error::InvalidImage(format!(
                "level {v} not below level count {levels}"
            )));
        }
        Ok(Self {
            width,
            height,
            levels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }
}

/// Reads a PNG or binary PGM raster, reducing RGB to BT.601 luma.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    from_dynamic(decoded).map_err(|format| Error::UnsupportedBitDepth {
        path: path.to_path_buf(),
        format,
    })
}

fn from_dynamic(img: DynamicImage) -> std::result::Result<GrayImage, String> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let rgb_luma = |r: u8, g: u8, b: u8| {
        LUMA_WEIGHTS[0] * f64::from(r) + LUMA_WEIGHTS[1] * f64::from(g) + LUMA_WEIGHTS[2] * f64::from(b)
    };
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| rgb_luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| rgb_luma(p.0[0], p.0[1], p.0[2])).collect(),
        other => return Err(format!("{:?}", other.color())),
    };
    Ok(GrayImage::from_raw(
        w,
        h,
        data.into_iter().map(clamp_intensity).collect(),
    ))
}

/// Extracts the centered `size`×`size` window; offsets are `floor((dim - size) / 2)`.
pub fn center_crop(img: &GrayImage, size: usize) -> Result<GrayImage> {
    if size == 0 || size > img.width || size > img.height {
        return Err(Error::arg(format!(
            "crop size {size} does not fit a {}x{} image",
            img.width, img.height
        )));
    }
    let x0 = (img.width - size) / 2;
    let y0 = (img.height - size) / 2;
    let mut data = Vec::with_capacity(size * size);
    for y in y0..y0 + size {
        let row = y * img.width;
        data.extend_from_slice(&img.data[row + x0..row + x0 + size]);
    }
    Ok(GrayImage::from_raw(size, size, data))
}

/// Maps intensities to `min(levels - 1, floor(v * levels / 256))`.
pub fn quantize(img: &GrayImage, levels: usize) -> Result<QuantizedImage> {
    if !(2..=256).contains(&levels) {
        return Err(Error::arg(format!(
            "quantization needs 2..=256 levels, got {levels}"
        )));
    }
    let top = (levels - 1) as f64;
    let scale = levels as f64 / 256.0;
    let data = img
        .data
        .iter()
        .map(|&v| (v * scale).floor().min(top).max(0.0) as u16)
        .collect();
    Ok(QuantizedImage {
        width: img.width,
        height: img.height,
        levels,
        data,
    })
}

/// Mean squared error between two equally sized images.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// Peak signal-to-noise ratio on the 0–255 scale.
///
/// Identical images yield [`PSNR_IDENTICAL_DB`] instead of infinity so reports
/// stay finite.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL_DB);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| (y * w + x) as f64)
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(1, 1, vec![256.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
        assert!(GrayImage::new(0, 1, vec![]).is_err());
        assert!(QuantizedImage::new(1, 1, 4, vec![4]).is_err());
    }

    #[test]
    fn crop_4x4_keeps_rows_and_cols_1_to_2() {
        let img = ramp(4, 4);
        let c = center_crop(&img, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
    }

    #[test]
    fn crop_5x5_keeps_rows_and_cols_1_to_3() {
        let img = ramp(5, 5);
        let c = center_crop(&img, 3).unwrap();
        assert_eq!(c.data(), &[6.0, 7.0, 8.0, 11.0, 12.0, 13.0, 16.0, 17.0, 18.0]);
    }

    #[test]
    fn crop_identity_and_errors() {
        let img = GrayImage::from_fn(256, 256, |x, y| ((x * 7 + y * 3) % 256) as f64);
        assert_eq!(center_crop(&img, 256).unwrap(), img);
        assert!(center_crop(&img, 257).is_err());
        assert!(center_crop(&img, 0).is_err());
    }

    #[test]
    fn quantize_examples() {
        let img = GrayImage::new(3, 1, vec![0.0, 255.0, 128.0]).unwrap();
        let q = quantize(&img, 32).unwrap();
        assert_eq!(q.data(), &[0, 31, 16]);
        assert!(quantize(&img, 1).is_err());
        assert!(quantize(&img, 257).is_err());
    }

    #[test]
    fn psnr_examples() {
        let zero = GrayImage::filled(8, 8, 0.0).unwrap();
        let white = GrayImage::filled(8, 8, 255.0).unwrap();
        assert_eq!(psnr(&zero, &zero).unwrap(), PSNR_IDENTICAL_DB);
        assert!(psnr(&zero, &white).unwrap().abs() < 1e-12);
        let base = GrayImage::filled(8, 8, 100.0).unwrap();
        let shifted = GrayImage::filled(8, 8, 116.0).unwrap();
        let expected = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
        assert!((psnr(&base, &shifted).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 24.05).abs() < 0.01);
        let small = GrayImage::filled(4, 8, 0.0).unwrap();
        assert!(matches!(psnr(&zero, &small), Err(Error::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(a in 0.0f64..=255.0, b in 0.0f64..=255.0, levels in 2usize..=256) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let img = GrayImage::new(2, 1, vec![lo, hi]).unwrap();
            let q = quantize(&img, levels).unwrap();
            prop_assert!(q.data()[0] <= q.data()[1]);
            prop_assert!(usize::from(q.data()[1]) < levels);
        }

        #[test]
        fn center_crop_is_idempotent(w in 1usize..20, h in 1usize..20, frac in 0.0f64..1.0) {
            let size = 1 + ((w.min(h) - 1) as f64 * frac) as usize;
            let img = ramp(w, h).map(|v| v % 256.0);
            let once = center_crop(&img, size).unwrap();
            let twice = center_crop(&once, size).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn psnr_symmetric_and_decreasing(vals in proptest::collection::vec(0.0f64..200.0, 16), d1 in 0.5f64..20.0, extra in 0.5f64..20.0) {
            let a = GrayImage::new(4, 4, vals.clone()).unwrap();
            let b = a.map(|v| v + d1);
            let c = a.map(|v| v + d1 + extra);
            let ab = psnr(&a, &b).unwrap();
            prop_assert_eq!(ab, psnr(&b, &a).unwrap());
            prop_assert!(psnr(&a, &c).unwrap() < ab);
        }
    }
}
