//! Gray-level co-occurrence matrices over single offsets and their
//! multi-angle, multi-scale average.
//!
//! An offset `(dx, dy)` pairs the pixel at column `x`, row `y` with the one at
//! column `x + dx`, row `y + dy`. Pairs whose partner falls outside the image
//! are skipped. Offsets are derived from an angle `θ` (degrees) and a signed
//! modulus `l` as `dx = round(l·sin θ)`, `dy = round(l·cos θ)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{FeatureMethod, FeatureVector};
use crate::corpus::QuantizedImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Offset {
    pub dx: i32,
    pub dy: i32,
}

impl Offset {
    pub fn new(dx: i32, dy: i32) -> Result<Self> {
        if dx == 0 && dy == 0 {
            return Err(Error::Config("offset (0, 0) pairs a pixel with itself".into()));
        }
        Ok(Self { dx, dy })
    }

    pub fn negated(self) -> Self {
        Self {
            dx: -self.dx,
            dy: -self.dy,
        }
    }
}

/// Angles in degrees and signed scales whose Cartesian product defines the offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleScaleConfig {
    pub angles: Vec<f64>,
    pub scales: Vec<i32>,
}

impl Default for AngleScaleConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl AngleScaleConfig {
    pub const PRESETS: [&'static str; 3] = ["full", "nonnegative", "axis"];

    /// Nine angles over the full circle and six signed scales.
    pub fn full() -> Self {
        Self {
            angles: vec![-180.0, -135.0, -90.0, -45.0, 0.0, 45.0, 90.0, 135.0, 180.0],
            scales: vec![-5, -3, -1, 1, 3, 5],
        }
    }

    /// Non-negative angles with positive scales only.
    pub fn nonnegative() -> Self {
        Self {
            angles: vec![0.0, 45.0, 90.0, 135.0, 180.0],
            scales: vec![1, 3, 5],
        }
    }

    /// Horizontal and vertical directions only.
    pub fn axis() -> Self {
        Self {
            angles: vec![-180.0, -90.0, 0.0, 90.0, 180.0],
            scales: vec![-5, -1, 1, 5],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" | "default" => Ok(Self::full()),
            "nonnegative" => Ok(Self::nonnegative()),
            "axis" => Ok(Self::axis()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of {:?}",
                Self::PRESETS
            ))),
        }
    }

    pub fn offset_count(&self) -> usize {
        self.angles.len() * self.scales.len()
    }
}

/// One offset per (scale, angle) pair, scales outermost. Duplicates are kept.
pub fn offsets_from(config: &AngleScaleConfig) -> Result<Vec<Offset>> {
    if config.angles.is_empty() || config.scales.is_empty() {
        return Err(Error::Config("angles and scales must be non-empty".into()));
    }
    if let Some(a) = config.angles.iter().find(|a| !a.is_finite()) {
        return Err(Error::Config(format!("angle {a} is not finite")));
    }
    let mut out = Vec::with_capacity(config.offset_count());
    for &l in &config.scales {
        for &theta in &config.angles {
            let rad = theta.to_radians();
            // f64::round rounds half away from zero.
            let dx = (f64::from(l) * rad.sin()).round() as i32;
            let dy = (f64::from(l) * rad.cos()).round() as i32;
            if dx == 0 && dy == 0 {
                return Err(Error::Config(format!(
                    "angle {theta}° with scale {l} rounds to offset (0, 0)"
                )));
            }
            out.push(Offset { dx, dy });
        }
    }
    Ok(out)
}

/// A `levels`×`levels` co-occurrence matrix, raw counts or probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    levels: usize,
    cells: Vec<f64>,
    normalized: bool,
    pairs: u64,
}

impl GlcmMatrix {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Number of in-bounds pixel pairs that were counted.
    pub fn pair_count(&self) -> u64 {
        self.pairs
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.levels + j]
    }

    pub fn transpose(&self) -> Self {
        let g = self.levels;
        let mut cells = vec![0.0; g * g];
        for i in 0..g {
            for j in 0..g {
                cells[j * g + i] = self.cells[i * g + j];
            }
        }
        Self {
            cells,
            ..self.clone()
        }
    }
}

/// Counts level pairs `(I(x, y), I(x + dx, y + dy))` over all in-bounds positions.
pub fn compute_glcm(img: &QuantizedImage, offset: Offset, normalize: bool) -> GlcmMatrix {
    let g = img.levels();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (dx, dy) = (i64::from(offset.dx), i64::from(offset.dy));
    let mut counts = vec![0u64; g * g];

    // Valid base positions: 0 <= x < w and 0 <= x + dx < w, likewise for y.
    let x0 = 0.max(-dx);
    let x1 = w.min(w - dx);
    let y0 = 0.max(-dy);
    let y1 = h.min(h - dy);
    let mut pairs = 0u64;
    if x0 < x1 && y0 < y1 {
        let data = img.data();
        let run = (x1 - x0) as usize;
        for y in y0..y1 {
            let base_start = (y * w + x0) as usize;
            let partner_start = ((y + dy) * w + x0 + dx) as usize;
            let base = &data[base_start..base_start + run];
            let partner = &data[partner_start..partner_start + run];
            for (&i, &j) in base.iter().zip(partner) {
                counts[usize::from(i) * g + usize::from(j)] += 1;
            }
        }
        pairs = (run as u64) * ((y1 - y0) as u64);
    }

    let cells = if normalize && pairs > 0 {
        let total = pairs as f64;
        counts.iter().map(|&c| c as f64 / total).collect()
    } else {
        counts.iter().map(|&c| c as f64).collect()
    };
    GlcmMatrix {
        levels: g,
        cells,
        normalized: normalize,
        pairs,
    }
}

/// Mean of normalized per-offset GLCMs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasGlcm {
    pub levels: usize,
    pub angles: Vec<f64>,
    pub scales: Vec<i32>,
    pub cells: Vec<f64>,
}

impl MasGlcm {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.levels + j]
    }

    /// Full-precision CSV, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 24);
        for row in self.cells.chunks(self.levels) {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                // `{:?}` prints the shortest representation that round-trips.
                write!(out, "{v:?}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Averages the normalized GLCMs of every configured offset.
///
/// Per-offset matrices are computed in parallel and summed in sorted offset
/// order, so the result does not depend on thread scheduling. Offsets with
/// no in-bounds pair on this image do not take part in the mean.
pub fn mas_glcm(img: &QuantizedImage, config: &AngleScaleConfig) -> Result<MasGlcm> {
    let mut offsets = offsets_from(config)?;
    offsets.sort_unstable();
    let mats: Vec<GlcmMatrix> = offsets
        .par_iter()
        .map(|&o| compute_glcm(img, o, true))
        .collect();
    let g = img.levels();
    let mut cells = vec![0.0; g * g];
    // Offsets reaching past the image have no pairs and are left out of the mean.
    let live: Vec<&GlcmMatrix> = mats.iter().filter(|m| m.pair_count() > 0).collect();
    if live.is_empty() {
        return Err(Error::Degenerate(format!(
            "no offset has a valid pixel pair on a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    for m in &live {
        for (acc, v) in cells.iter_mut().zip(m.cells()) {
            *acc += v;
        }
    }
    let n = live.len() as f64;
    cells.iter_mut().for_each(|c| *c /= n);
    Ok(MasGlcm {
        levels: g,
        angles: config.angles.clone(),
        scales: config.scales.clone(),
        cells,
    })
}

/// Row-major flattening into a `levels²` feature vector.
pub fn glcm_to_feature(m: &MasGlcm) -> FeatureVector {
    FeatureVector::new(FeatureMethod::MasGlcm, m.cells.clone())
}
