//! Seeded multi-texture scenes used as clean sources when no photographs are
//! at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GrayImage;

/// Renders a deterministic `size`×`size` scene: a shaded background with
/// soft-edged blobs and grating patches, overlaid by a Voronoi mosaic whose
/// cells each carry their own texture.
pub fn synthetic_scene(seed: u64, size: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;

    let bg_lo = rng.gen_range(30.0..120.0);
    let bg_hi = rng.gen_range(130.0..225.0);
    let bg_dir = rng.gen_range(0.0..std::f64::consts::TAU);
    let (bg_c, bg_s) = (bg_dir.cos(), bg_dir.sin());

    let blobs: Vec<Blob> = (0..rng.gen_range(6..13))
        .map(|_| Blob {
            cx: rng.gen_range(0.0..s),
            cy: rng.gen_range(0.0..s),
            rx: rng.gen_range(0.05..0.3) * s,
            ry: rng.gen_range(0.05..0.3) * s,
            rot: rng.gen_range(0.0..std::f64::consts::PI),
            value: rng.gen_range(20.0..235.0),
            edge: rng.gen_range(0.02..0.15),
        })
        .collect();

    let gratings: Vec<Grating> = (0..rng.gen_range(1..4))
        .map(|_| {
            let x0 = rng.gen_range(0.0..0.7) * s;
            let y0 = rng.gen_range(0.0..0.7) * s;
            Grating {
                x0,
                y0,
                x1: x0 + rng.gen_range(0.15..0.3) * s,
                y1: y0 + rng.gen_range(0.15..0.3) * s,
                angle: rng.gen_range(0.0..std::f64::consts::PI),
                period: rng.gen_range(4.0..30.0),
                amplitude: rng.gen_range(10.0..40.0),
            }
        })
        .collect();

    let coarse = ValueNoise::new(&mut rng, size, 32);
    let fine = ValueNoise::new(&mut rng, size, 4);
    let coarse_amp = rng.gen_range(5.0..20.0);
    let fine_amp = rng.gen_range(1.0..6.0);
    let mosaic = Mosaic::new(&mut rng, size);

    GrayImage::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let t = ((fx - s / 2.0) * bg_c + (fy - s / 2.0) * bg_s) / s + 0.5;
        let mut v = bg_lo + (bg_hi - bg_lo) * t.clamp(0.0, 1.0);
        for blob in &blobs {
            let w = blob.coverage(fx, fy);
            v = v * (1.0 - w) + blob.value * w;
        }
        for g in &gratings {
            if fx >= g.x0 && fx < g.x1 && fy >= g.y0 && fy < g.y1 {
                let phase = (fx * g.angle.cos() + fy * g.angle.sin()) / g.period;
                v += g.amplitude * (std::f64::consts::TAU * phase).sin();
            }
        }
        v += coarse_amp * coarse.sample(fx, fy) + fine_amp * fine.sample(fx, fy);
        mosaic.shade(fx, fy, v)
    })
}

enum Texture {
    /// Background left untouched.
    Passthrough,
    Flat,
    Grating { angle: f64, period: f64 },
    Checker { period: f64 },
    Noise(ValueNoise),
}

struct Cell {
    x: f64,
    y: f64,
    base: f64,
    amplitude: f64,
    texture: Texture,
}

struct Mosaic {
    cells: Vec<Cell>,
}

impl Mosaic {
    fn new(rng: &mut ChaCha8Rng, size: usize) -> Self {
        let s = size as f64;
        let cells = (0..rng.gen_range(8..17))
            .map(|_| {
                let texture = match rng.gen_range(0..5) {
                    0 => Texture::Passthrough,
                    1 => Texture::Flat,
                    2 => Texture::Grating {
                        angle: rng.gen_range(0.0..std::f64::consts::PI),
                        period: rng.gen_range(3.0..20.0),
                    },
                    3 => Texture::Checker {
                        period: rng.gen_range(2.0..12.0),
                    },
                    _ => {
                        let cell = rng.gen_range(2..17);
                        Texture::Noise(ValueNoise::new(rng, size, cell))
                    }
                };
                Cell {
                    x: rng.gen_range(0.0..s),
                    y: rng.gen_range(0.0..s),
                    base: rng.gen_range(30.0..225.0),
                    amplitude: rng.gen_range(10.0..45.0),
                    texture,
                }
            })
            .collect();
        Self { cells }
    }

    fn shade(&self, x: f64, y: f64, background: f64) -> f64 {
        let cell = self
            .cells
            .iter()
            .min_by(|a, b| {
                let da = (a.x - x).powi(2) + (a.y - y).powi(2);
                let db = (b.x - x).powi(2) + (b.y - y).powi(2);
                da.total_cmp(&db)
            })
            .expect("mosaic has cells");
        let a = cell.amplitude;
        match &cell.texture {
            Texture::Passthrough => background,
            Texture::Flat => 0.7 * cell.base + 0.3 * background,
            Texture::Grating { angle, period } => {
                let phase = (x * angle.cos() + y * angle.sin()) / period;
                cell.base + a * (std::f64::consts::TAU * phase).sin()
            }
            Texture::Checker { period } => {
                let parity = ((x / period).floor() + (y / period).floor()) as i64 & 1;
                cell.base + if parity == 0 { a } else { -a }
            }
            Texture::Noise(noise) => cell.base + a * noise.sample(x, y),
        }
    }
}

struct Blob {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    rot: f64,
    value: f64,
    edge: f64,
}

impl Blob {
    fn coverage(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (c, s) = (self.rot.cos(), self.rot.sin());
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        let r = (u * u + v * v).sqrt();
        let t = ((1.0 + self.edge - r) / (2.0 * self.edge)).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }
}

struct Grating {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    angle: f64,
    period: f64,
    amplitude: f64,
}

/// Bilinearly interpolated lattice noise in `[-1, 1]`.
struct ValueNoise {
    cell: f64,
    side: usize,
    grid: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, size: usize, cell: usize) -> Self {
        let side = size / cell + 2;
        let grid = (0..side * side).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self {
            cell: cell as f64,
            side,
            grid,
        }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let gx = x / self.cell;
        let gy = y / self.cell;
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let (tx, ty) = (gx - gx.floor(), gy - gy.floor());
        let ix = ix.min(self.side - 2);
        let iy = iy.min(self.side - 2);
        let at = |i: usize, j: usize| self.grid[j * self.side + i];
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = synthetic_scene(3, 64);
        assert_eq!(a, synthetic_scene(3, 64));
        assert_ne!(a, synthetic_scene(4, 64));
        assert_eq!(a.width(), 64);
    }

    #[test]
    fn has_varied_content() {
        let img = synthetic_scene(11, 128);
        let mean = img.mean();
        let var = img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / img.len() as f64;
        assert!(var.sqrt() > 10.0, "scene too flat: std {}", var.sqrt());
    }
}
