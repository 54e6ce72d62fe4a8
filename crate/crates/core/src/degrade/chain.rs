//! Eight-step composite degradation whose step count serves as an "order"
//! label for severity.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::{downsample, gaussian_noise, substream_seed};
use crate::corpus::{clamp_intensity, GrayImage};
use crate::{Error, Result};

pub const CHAIN_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainOp {
    /// 3×3 Gaussian, sigma 1.
    Blur,
    Downsample(usize),
    Noise(f64),
    /// Block-DCT quantization at the given quality.
    Jpeg(u8),
}

pub const CHAIN_OPS: [ChainOp; CHAIN_STEPS] = [
    ChainOp::Blur,
    ChainOp::Downsample(2),
    ChainOp::Noise(10.0),
    ChainOp::Jpeg(70),
    ChainOp::Blur,
    ChainOp::Downsample(2),
    ChainOp::Noise(15.0),
    ChainOp::Jpeg(40),
];

/// Applies step `step` (1-based) of the chain; its seed is substream `step`
/// of `master_seed`.
pub fn chain_step(img: &GrayImage, step: usize, master_seed: u64) -> Result<GrayImage> {
    if !(1..=CHAIN_STEPS).contains(&step) {
        return Err(Error::arg(format!("chain step {step} outside 1..={CHAIN_STEPS}")));
    }
    let seed = substream_seed(master_seed, step as u64);
    match CHAIN_OPS[step - 1] {
        ChainOp::Blur => Ok(gaussian_blur3(img)),
        ChainOp::Downsample(f) => downsample(img, f),
        ChainOp::Noise(sigma) => gaussian_noise(img, sigma, seed),
        ChainOp::Jpeg(q) => Ok(jpeg_proxy(img, q)),
    }
}

/// Runs the first `steps` chain operators; returns the image and its order.
pub fn degradation_chain(img: &GrayImage, steps: usize, seed: u64) -> Result<(GrayImage, u8)> {
    if !(1..=CHAIN_STEPS).contains(&steps) {
        return Err(Error::arg(format!("chain length {steps} outside 1..={CHAIN_STEPS}")));
    }
    let mut out = img.clone();
    for step in 1..=steps {
        out = chain_step(&out, step, seed)?;
    }
    Ok((out, steps as u8))
}

/// 3×3 Gaussian blur (sigma 1) with replicate padding.
pub fn gaussian_blur3(img: &GrayImage) -> GrayImage {
    let k1 = [(-0.5f64).exp(), 1.0, (-0.5f64).exp()];
    let norm: f64 = k1.iter().sum::<f64>().powi(2);
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut data = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, ky) in k1.iter().enumerate() {
                for (i, kx) in k1.iter().enumerate() {
                    acc += kx * ky * img.get_clamped(x + i as isize - 1, y + j as isize - 1);
                }
            }
            data.push(clamp_intensity(acc / norm));
        }
    }
    GrayImage::from_raw(w as usize, h as usize, data)
}

const LUMA_QUANT: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., 12., 12., 14., 19., 26., 58., 60., 55., 14., 13., 16.,
    24., 40., 57., 69., 56., 14., 17., 22., 29., 51., 87., 80., 62., 18., 22., 37., 56., 68., 109.,
    103., 77., 24., 35., 55., 64., 81., 104., 113., 92., 49., 64., 78., 87., 103., 121., 120.,
    101., 72., 92., 95., 98., 112., 100., 103., 99.,
];

fn quant_table(quality: u8) -> [f64; 64] {
    let q = f64::from(quality.clamp(1, 100));
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    let mut out = [0.0; 64];
    for (o, base) in out.iter_mut().zip(LUMA_QUANT) {
        *o = ((base * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0);
    }
    out
}

/// Orthonormal 8-point DCT-II basis, `basis[u][x]`.
fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let c = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = c * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

/// JPEG-like compression proxy: level shift, 8×8 block DCT, quantization with
/// the quality-scaled standard luminance table, and reconstruction. Partial
/// edge blocks are replicate-padded.
pub fn jpeg_proxy(img: &GrayImage, quality: u8) -> GrayImage {
    let table = quant_table(quality);
    let basis = dct_basis();
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0; w * h];
    let mut block = [[0.0f64; 8]; 8];
    let mut tmp = [[0.0f64; 8]; 8];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for (y, row) in block.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = img.get((bx + x).min(w - 1), (by + y).min(h - 1)) - 128.0;
                }
            }
            // Forward: rows then columns.
            for y in 0..8 {
                for u in 0..8 {
                    tmp[y][u] = (0..8).map(|x| basis[u][x] * block[y][x]).sum();
                }
            }
            for v in 0..8 {
                for u in 0..8 {
                    let c: f64 = (0..8).map(|y| basis[v][y] * tmp[y][u]).sum();
                    let q = table[v * 8 + u];
                    block[v][u] = (c / q).round() * q;
                }
            }
            // Inverse: columns then rows.
            for y in 0..8 {
                for u in 0..8 {
                    tmp[y][u] = (0..8).map(|v| basis[v][y] * block[v][u]).sum();
                }
            }
            for y in 0..8 {
                for x in 0..8 {
                    let (px, py) = (bx + x, by + y);
                    if px < w && py < h {
                        let v: f64 = (0..8).map(|u| basis[u][x] * tmp[y][u]).sum();
                        out[py * w + px] = clamp_intensity(v + 128.0);
                    }
                }
            }
        }
    }
    GrayImage::from_raw(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{psnr, synthetic_scene};

    #[test]
    fn one_step_is_one_blur() {
        let img = synthetic_scene(3, 48);
        let (out, order) = degradation_chain(&img, 1, 9).unwrap();
        assert_eq!(order, 1);
        assert_eq!(out, gaussian_blur3(&img));
    }

    #[test]
    fn prefix_property() {
        let img = synthetic_scene(4, 40);
        for k in 2..=CHAIN_STEPS {
            let (prev, _) = degradation_chain(&img, k - 1, 21).unwrap();
            let (full, _) = degradation_chain(&img, k, 21).unwrap();
            assert_eq!(full, chain_step(&prev, k, 21).unwrap());
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        let img = synthetic_scene(4, 16);
        assert!(degradation_chain(&img, 0, 1).is_err());
        assert!(degradation_chain(&img, 9, 1).is_err());
        assert!(chain_step(&img, 0, 1).is_err());
    }

    #[test]
    fn blur_preserves_constants() {
        let flat = GrayImage::filled(9, 7, 42.0).unwrap();
        for (a, b) in gaussian_blur3(&flat).data().iter().zip(flat.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dct_basis_is_orthonormal() {
        let b = dct_basis();
        for i in 0..8 {
            for j in 0..8 {
                let dot: f64 = (0..8).map(|x| b[i][x] * b[j][x]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jpeg_quality_orders_fidelity() {
        let img = synthetic_scene(12, 64);
        let hi = psnr(&img, &jpeg_proxy(&img, 95)).unwrap();
        let lo = psnr(&img, &jpeg_proxy(&img, 10)).unwrap();
        assert!(hi > lo, "q95 {hi} dB vs q10 {lo} dB");
        let flat = GrayImage::filled(16, 16, 128.0).unwrap();
        assert_eq!(jpeg_proxy(&flat, 40), flat);
        let odd = jpeg_proxy(&img_crop(&img, 21), 50);
        assert_eq!((odd.width(), odd.height()), (21, 21));
    }

    fn img_crop(img: &GrayImage, size: usize) -> GrayImage {
        crate::corpus::center_crop(img, size).unwrap()
    }
}
