use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{seeded_rng, HAZE_TRANSMISSIONS, LOW_LIGHT_SCALES, SNOW_LEVELS};
use crate::corpus::{clamp_intensity, GrayImage};
use crate::{Error, Result};

/// Airlight intensity of the haze model.
pub const HAZE_AIRLIGHT: f64 = 230.0;

/// Streaks per level for every 2048 pixels of image area.
const SNOW_STREAKS_PER_2048PX: f64 = 1.0;
/// Round flakes drawn alongside each streak.
const SNOW_FLAKES_PER_STREAK: usize = 3;

/// Adds i.i.d. `N(0, sigma²)` noise and clamps to `[0, 255]`.
pub fn gaussian_noise(img: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("noise sigma must be positive, got {sigma}")));
    }
    let mut rng = seeded_rng(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    Ok(img.map(|v| v + normal.sample(&mut rng)))
}

/// Zeroes exactly `round(ratio · H · W)` distinct pixels.
pub fn pepper_noise(img: &GrayImage, ratio: f64, seed: u64) -> Result<GrayImage> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::arg(format!("pepper ratio must lie in (0, 1), got {ratio}")));
    }
    let n = img.len();
    let count = (ratio * n as f64).round() as usize;
    let mut rng = seeded_rng(seed);
    let mut data = img.data().to_vec();
    for idx in sample(&mut rng, n, count) {
        data[idx] = 0.0;
    }
    Ok(GrayImage::from_raw(img.width(), img.height(), data))
}

/// Box-filter decimation by `factor` followed by nearest-neighbour
/// re-expansion to the original size. Edge blocks that do not fill a whole
/// `factor`×`factor` cell average the pixels they do cover.
pub fn downsample(img: &GrayImage, factor: usize) -> Result<GrayImage> {
    if factor < 2 {
        return Err(Error::arg(format!("downsample factor must be >= 2, got {factor}")));
    }
    let (w, h) = (img.width(), img.height());
    let (bw, bh) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut sums = vec![0.0; bw * bh];
    let mut counts = vec![0usize; bw * bh];
    for y in 0..h {
        for x in 0..w {
            let b = (y / factor) * bw + x / factor;
            sums[b] += img.get(x, y);
            counts[b] += 1;
        }
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(means[(y / factor) * bw + x / factor]);
        }
    }
    Ok(GrayImage::from_raw(w, h, data))
}

fn level_entry<T: Copy>(table: &[T], level: usize, what: &str) -> Result<T> {
    table.get(level).copied().ok_or_else(|| {
        Error::arg(format!("{what} level {level} outside 0..{}", table.len()))
    })
}

pub fn low_light(img: &GrayImage, level: usize) -> Result<GrayImage> {
    let s = level_entry(&LOW_LIGHT_SCALES, level, "low-light")?;
    Ok(low_light_with(img, s))
}

/// Scales intensities by `scale` (expected in `(0, 1]`).
pub fn low_light_with(img: &GrayImage, scale: f64) -> GrayImage {
    img.map(|v| scale * v)
}

pub fn haze(img: &GrayImage, level: usize) -> Result<GrayImage> {
    let t = level_entry(&HAZE_TRANSMISSIONS, level, "haze")?;
    Ok(haze_with(img, t))
}

/// Atmospheric blend `t·I + (1 − t)·A` with airlight [`HAZE_AIRLIGHT`].
pub fn haze_with(img: &GrayImage, transmission: f64) -> GrayImage {
    img.map(|v| transmission * v + (1.0 - transmission) * HAZE_AIRLIGHT)
}

/// Overlays bright, roughly parallel streaks and small round flakes. Their
/// count is proportional to the level multiplier and to the image area.
pub fn snow(img: &GrayImage, level: usize, seed: u64) -> Result<GrayImage> {
    let mult = level_entry(&SNOW_LEVELS, level, "snow")?;
    let (w, h) = (img.width(), img.height());
    let count = (mult as f64 * SNOW_STREAKS_PER_2048PX * (w * h) as f64 / 2048.0).round() as usize;
    let mut data = img.data().to_vec();
    if count == 0 {
        return Ok(GrayImage::from_raw(w, h, data));
    }
    let mut rng = seeded_rng(seed);
    let fall = rng.gen_range(60.0f64..120.0).to_radians();
    for _ in 0..count {
        let angle = fall + rng.gen_range(-10.0f64..10.0).to_radians();
        let (dx, dy) = (angle.cos(), angle.sin());
        let len = rng.gen_range(6.0..20.0);
        let thick = rng.gen_bool(0.3);
        let opacity = rng.gen_range(0.5..0.9);
        let (mut x, mut y) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let steps = len as usize;
        for _ in 0..steps {
            brighten(&mut data, w, h, x, y, opacity);
            if thick {
                brighten(&mut data, w, h, x + 1.0, y, opacity * 0.6);
            }
            x += dx;
            y += dy;
        }
        for _ in 0..SNOW_FLAKES_PER_STREAK {
            let (cx, cy) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
            let r: f64 = rng.gen_range(0.5..2.0);
            let opacity = rng.gen_range(0.6..1.0);
            let reach = r.ceil() as isize;
            for oy in -reach..=reach {
                for ox in -reach..=reach {
                    let (px, py) = (cx + ox as f64, cy + oy as f64);
                    if (ox * ox + oy * oy) as f64 <= r * r {
                        brighten(&mut data, w, h, px, py, opacity);
                    }
                }
            }
        }
    }
    Ok(GrayImage::from_raw(w, h, data))
}

fn brighten(data: &mut [f64], w: usize, h: usize, x: f64, y: f64, opacity: f64) {
    if x < 0.0 || y < 0.0 {
        return;
    }
    let (xi, yi) = (x as usize, y as usize);
    if xi >= w || yi >= h {
        return;
    }
    let p = &mut data[yi * w + xi];
    *p = clamp_intensity(*p + opacity * (255.0 - *p));
}
