//! Seeded synthetic degradation operators and the order-labelled chain.
//!
//! Every operator is a pure function of its input image and parameters; the
//! stochastic ones draw from a ChaCha8 stream seeded with the caller's 64-bit
//! seed, so results are bit-identical across platforms.

mod chain;
mod ops;
mod spec;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::GrayImage;
use crate::{Error, Result};

pub use chain::{chain_step, degradation_chain, gaussian_blur3, jpeg_proxy, ChainOp, CHAIN_OPS, CHAIN_STEPS};
pub use ops::{downsample, gaussian_noise, haze, haze_with, low_light, low_light_with, pepper_noise, snow, HAZE_AIRLIGHT};
pub use spec::{parse_spec_list, SpecPattern};

/// Standard deviations on the 0–255 scale.
pub const GAUSSIAN_SIGMAS: [f64; 5] = [15.0, 25.0, 50.0, 75.0, 100.0];
/// Fraction of pixels zeroed.
pub const PEPPER_RATIOS: [f64; 5] = [0.02, 0.05, 0.1, 0.2, 0.3];
pub const DOWNSAMPLE_FACTORS: [usize; 5] = [2, 3, 4, 6, 8];
/// Linear intensity scales.
pub const LOW_LIGHT_SCALES: [f64; 5] = [0.8, 0.6, 0.4, 0.25, 0.1];
/// Transmission of the atmospheric scattering blend.
pub const HAZE_TRANSMISSIONS: [f64; 5] = [0.8, 0.65, 0.5, 0.35, 0.2];
/// Streak-count multipliers; level 0 draws nothing.
pub const SNOW_LEVELS: [usize; 6] = [0, 1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegradationKind {
    GaussianNoise,
    PepperNoise,
    Downsample,
    LowLight,
    Haze,
    Snow,
    Chain,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 7] = [
        DegradationKind::GaussianNoise,
        DegradationKind::PepperNoise,
        DegradationKind::Downsample,
        DegradationKind::LowLight,
        DegradationKind::Haze,
        DegradationKind::Snow,
        DegradationKind::Chain,
    ];

    /// The five kinds of the type-classification benchmark.
    pub const BENCH_TYPES: [DegradationKind; 5] = [
        DegradationKind::Haze,
        DegradationKind::LowLight,
        DegradationKind::Snow,
        DegradationKind::GaussianNoise,
        DegradationKind::PepperNoise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DegradationKind::GaussianNoise => "gaussian-noise",
            DegradationKind::PepperNoise => "pepper-noise",
            DegradationKind::Downsample => "downsample",
            DegradationKind::LowLight => "low-light",
            DegradationKind::Haze => "haze",
            DegradationKind::Snow => "snow",
            DegradationKind::Chain => "chain",
        }
    }

    /// Number of entries in the kind's level table.
    pub fn level_count(self) -> usize {
        match self {
            DegradationKind::GaussianNoise => GAUSSIAN_SIGMAS.len(),
            DegradationKind::PepperNoise => PEPPER_RATIOS.len(),
            DegradationKind::Downsample => DOWNSAMPLE_FACTORS.len(),
            DegradationKind::LowLight => LOW_LIGHT_SCALES.len(),
            DegradationKind::Haze => HAZE_TRANSMISSIONS.len(),
            DegradationKind::Snow => SNOW_LEVELS.len(),
            DegradationKind::Chain => CHAIN_STEPS,
        }
    }

    /// Level used when a kind appears in the type-classification corpus.
    pub fn default_level(self) -> usize {
        match self {
            DegradationKind::GaussianNoise => 1, // sigma 25
            DegradationKind::PepperNoise => 2,   // ratio 0.1
            DegradationKind::Downsample => 0,
            DegradationKind::LowLight => 2,
            DegradationKind::Haze => 2,
            DegradationKind::Snow => 3,
            DegradationKind::Chain => CHAIN_STEPS - 1,
        }
    }
}

impl fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DegradationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown degradation kind {s:?}")))
    }
}

/// Ground-truth tag of a synthesized sample.
///
/// For chains `level = order - 1`, so level classification also works on
/// chain corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DegradationLabel {
    #[serde(rename = "type")]
    pub kind: DegradationKind,
    pub level: usize,
    pub order: Option<u8>,
}

impl DegradationLabel {
    pub fn new(kind: DegradationKind, level: usize, order: Option<u8>) -> Result<Self> {
        let label = Self { kind, level, order };
        label.validate()?;
        Ok(label)
    }

    pub fn chain(order: u8) -> Result<Self> {
        Self::new(DegradationKind::Chain, usize::from(order).saturating_sub(1), Some(order))
    }

    pub fn validate(&self) -> Result<()> {
        if self.level >= self.kind.level_count() {
            return Err(Error::arg(format!(
                "level {} outside the {} table (0..{})",
                self.level,
                self.kind,
                self.kind.level_count()
            )));
        }
        match (self.kind, self.order) {
            (DegradationKind::Chain, Some(o)) if (1..=CHAIN_STEPS as u8).contains(&o) => {
                if self.level + 1 != usize::from(o) {
                    return Err(Error::arg(format!(
                        "chain level {} disagrees with order {o}",
                        self.level
                    )));
                }
                Ok(())
            }
            (DegradationKind::Chain, o) => Err(Error::arg(format!(
                "chain labels need an order in 1..={CHAIN_STEPS}, got {o:?}"
            ))),
            (_, None) => Ok(()),
            (k, Some(_)) => Err(Error::arg(format!("{k} labels carry no order"))),
        }
    }
}

/// A fully determined degradation: kind, level index and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DegradeSpec {
    pub kind: DegradationKind,
    pub level: usize,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn new(kind: DegradationKind, level: usize, seed: u64) -> Result<Self> {
        if level >= kind.level_count() {
            return Err(Error::arg(format!(
                "level {level} outside the {kind} table (0..{})",
                kind.level_count()
            )));
        }
        Ok(Self { kind, level, seed })
    }

    pub fn label(&self) -> DegradationLabel {
        match self.kind {
            DegradationKind::Chain => DegradationLabel {
                kind: self.kind,
                level: self.level,
                order: Some(self.level as u8 + 1),
            },
            kind => DegradationLabel {
                kind,
                level: self.level,
                order: None,
            },
        }
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        let l = self.level;
        match self.kind {
            DegradationKind::GaussianNoise => gaussian_noise(img, GAUSSIAN_SIGMAS[l], self.seed),
            DegradationKind::PepperNoise => pepper_noise(img, PEPPER_RATIOS[l], self.seed),
            DegradationKind::Downsample => downsample(img, DOWNSAMPLE_FACTORS[l]),
            DegradationKind::LowLight => low_light(img, l),
            DegradationKind::Haze => haze(img, l),
            DegradationKind::Snow => snow(img, l, self.seed),
            DegradationKind::Chain => degradation_chain(img, l + 1, self.seed).map(|(out, _)| out),
        }
    }
}

/// Seeded portable generator used by every stochastic operator.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of substream `index` from a master seed (SplitMix64 mixing).
pub fn substream_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x6A09_E667_F3BC_C909)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_invariants() {
        assert!(DegradationLabel::new(DegradationKind::Haze, 4, None).is_ok());
        assert!(DegradationLabel::new(DegradationKind::Haze, 5, None).is_err());
        assert!(DegradationLabel::new(DegradationKind::Haze, 0, Some(1)).is_err());
        assert!(DegradationLabel::new(DegradationKind::Chain, 0, None).is_err());
        assert!(DegradationLabel::chain(0).is_err());
        assert!(DegradationLabel::chain(9).is_err());
        assert_eq!(DegradationLabel::chain(8).unwrap().level, 7);
        assert!(DegradationLabel::new(DegradationKind::Chain, 3, Some(2)).is_err());
    }

    #[test]
    fn spec_label_and_apply() {
        let s = DegradeSpec::new(DegradationKind::Chain, 4, 1).unwrap();
        assert_eq!(s.label(), DegradationLabel::chain(5).unwrap());
        assert!(DegradeSpec::new(DegradationKind::GaussianNoise, 5, 0).is_err());
        let img = crate::corpus::synthetic_scene(1, 32);
        for kind in DegradationKind::ALL {
            for level in 0..kind.level_count() {
                let spec = DegradeSpec::new(kind, level, 3).unwrap();
                let a = spec.apply(&img).unwrap();
                assert_eq!(a, spec.apply(&img).unwrap(), "{kind} level {level}");
                assert_eq!((a.width(), a.height()), (32, 32));
            }
        }
    }

    #[test]
    fn substreams_differ() {
        let seeds: std::collections::HashSet<u64> = (0..64).map(|i| substream_seed(42, i)).collect();
        assert_eq!(seeds.len(), 64);
        assert_ne!(substream_seed(1, 0), substream_seed(2, 0));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in DegradationKind::ALL {
            assert_eq!(k.as_str().parse::<DegradationKind>().unwrap(), k);
            assert!(k.default_level() < k.level_count());
        }
    }
}
