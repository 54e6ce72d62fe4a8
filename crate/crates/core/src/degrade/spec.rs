//! Command-line degradation strings such as `gaussian:25:seed=7`,
//! `chain:1..8` or `lowlight:all`.
//!
//! The middle field is the physical parameter (noise sigma, pepper ratio,
//! downsample factor, low-light scale, haze transmission, snow level, chain
//! length); it must appear in the kind's level table. Ranges `a..b` are
//! inclusive, lists are comma separated, and `all` selects every level.

use super::{
    DegradationKind, DOWNSAMPLE_FACTORS, GAUSSIAN_SIGMAS, HAZE_TRANSMISSIONS, LOW_LIGHT_SCALES,
    PEPPER_RATIOS, SNOW_LEVELS,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecPattern {
    pub kind: DegradationKind,
    pub levels: Vec<usize>,
    pub seed: Option<u64>,
}

impl std::str::FromStr for SpecPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_one(s)
    }
}

fn kind_alias(name: &str) -> Result<DegradationKind> {
    Ok(match name {
        "gaussian" | "gaussian-noise" | "noise" => DegradationKind::GaussianNoise,
        "pepper" | "pepper-noise" => DegradationKind::PepperNoise,
        "downsample" | "down" => DegradationKind::Downsample,
        "lowlight" | "low-light" => DegradationKind::LowLight,
        "haze" => DegradationKind::Haze,
        "snow" => DegradationKind::Snow,
        "chain" => DegradationKind::Chain,
        other => return Err(Error::arg(format!("unknown degradation {other:?}"))),
    })
}

/// Parameter value attached to each level index.
fn level_values(kind: DegradationKind) -> Vec<f64> {
    match kind {
        DegradationKind::GaussianNoise => GAUSSIAN_SIGMAS.to_vec(),
        DegradationKind::PepperNoise => PEPPER_RATIOS.to_vec(),
        DegradationKind::Downsample => DOWNSAMPLE_FACTORS.iter().map(|&f| f as f64).collect(),
        DegradationKind::LowLight => LOW_LIGHT_SCALES.to_vec(),
        DegradationKind::Haze => HAZE_TRANSMISSIONS.to_vec(),
        DegradationKind::Snow => SNOW_LEVELS.iter().map(|&l| l as f64).collect(),
        DegradationKind::Chain => (1..=super::CHAIN_STEPS).map(|s| s as f64).collect(),
    }
}

fn level_of(kind: DegradationKind, value: f64) -> Result<usize> {
    let table = level_values(kind);
    table
        .iter()
        .position(|&v| (v - value).abs() <= 1e-9 * v.abs().max(1.0))
        .ok_or_else(|| Error::arg(format!("{kind} has no level with parameter {value}; known: {table:?}")))
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::arg(format!("not a number: {s:?}")))
}

fn parse_one(text: &str) -> Result<SpecPattern> {
    let mut parts = text.trim().split(':');
    let kind = kind_alias(parts.next().unwrap_or_default())?;
    let param = parts
        .next()
        .ok_or_else(|| Error::arg(format!("{text:?} lacks a parameter (e.g. gaussian:25)")))?;
    let mut seed = None;
    for extra in parts {
        match extra.split_once('=') {
            Some(("seed", v)) => {
                seed = Some(
                    v.parse::<u64>()
                        .map_err(|_| Error::arg(format!("bad seed {v:?}")))?,
                )
            }
            _ => return Err(Error::arg(format!("unknown field {extra:?} in {text:?}"))),
        }
    }

    let levels = if param == "all" {
        (0..kind.level_count()).collect()
    } else if let Some((lo, hi)) = param.split_once("..") {
        let (lo, hi) = (parse_number(lo)?, parse_number(hi)?);
        let table = level_values(kind);
        let picked: Vec<usize> = table
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= lo - 1e-12 && v <= hi + 1e-12)
            .map(|(i, _)| i)
            .collect();
        if picked.is_empty() {
            return Err(Error::arg(format!("range {param:?} selects no {kind} level")));
        }
        picked
    } else {
        param
            .split(',')
            .map(|v| parse_number(v).and_then(|v| level_of(kind, v)))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(SpecPattern { kind, levels, seed })
}

/// Parses a whitespace- or semicolon-separated list of patterns.
pub fn parse_spec_list(text: &str) -> Result<Vec<SpecPattern>> {
    let out: Vec<SpecPattern> = text
        .split(|c: char| c == ';' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(parse_one)
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::arg("empty degradation list"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_forms() {
        let p: SpecPattern = "gaussian:25:seed=7".parse().unwrap();
        assert_eq!(p.kind, DegradationKind::GaussianNoise);
        assert_eq!(p.levels, vec![1]);
        assert_eq!(p.seed, Some(7));

        let p: SpecPattern = "chain:5:seed=42".parse().unwrap();
        assert_eq!((p.kind, p.levels.clone(), p.seed), (DegradationKind::Chain, vec![4], Some(42)));

        let p: SpecPattern = "chain:1..8".parse().unwrap();
        assert_eq!(p.levels, (0..8).collect::<Vec<_>>());

        let p: SpecPattern = "gaussian:15,25,50,75,100".parse().unwrap();
        assert_eq!(p.levels, vec![0, 1, 2, 3, 4]);
        assert_eq!("lowlight:all".parse::<SpecPattern>().unwrap().levels.len(), 5);
        assert_eq!("pepper:0.1".parse::<SpecPattern>().unwrap().levels, vec![2]);
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["blur:3", "gaussian", "gaussian:33", "gaussian:25:seed=x", "haze:0.5:foo=1", "chain:9..12"] {
            assert!(bad.parse::<SpecPattern>().is_err(), "{bad}");
        }
        assert!(parse_spec_list("  ").is_err());
        assert_eq!(parse_spec_list("haze:all; snow:0..2").unwrap().len(), 2);
    }
}
