//! The degradation-classification benchmark: builds labelled corpora from
//! clean images, extracts every characterization and scores it with KNN.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    fourier_feature, laplace_feature, raw_feature, sobel_feature, FeatureMethod, FeatureVector, DEFAULT_BINS,
    DEFAULT_POOL, DEFAULT_RINGS,
};
use crate::classify::{evaluate, BenchReport, EvalOptions, LabeledFeatureSet, Task};
use crate::corpus::{center_crop, quantize, synthetic_scene, GrayImage, DEFAULT_CROP, DEFAULT_LEVELS};
use crate::degrade::{substream_seed, DegradationKind, DegradationLabel, DegradeSpec};
use crate::glcm::{glcm_to_feature, mas_glcm, AngleScaleConfig};
use crate::{Error, Result};

/// Parameters of every feature extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub levels: usize,
    pub glcm: AngleScaleConfig,
    pub pool: usize,
    pub bins: usize,
    pub rings: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS,
            glcm: AngleScaleConfig::full(),
            pool: DEFAULT_POOL,
            bins: DEFAULT_BINS,
            rings: DEFAULT_RINGS,
        }
    }
}

pub fn extract(method: FeatureMethod, img: &GrayImage, cfg: &FeatureConfig) -> Result<FeatureVector> {
    match method {
        FeatureMethod::Raw => raw_feature(img, cfg.pool),
        FeatureMethod::Sobel => sobel_feature(img, cfg.bins),
        FeatureMethod::Laplace => laplace_feature(img, cfg.bins),
        FeatureMethod::Fourier => fourier_feature(img, cfg.rings),
        FeatureMethod::MasGlcm => {
            let q = quantize(img, cfg.levels)?;
            Ok(glcm_to_feature(&mas_glcm(&q, &cfg.glcm)?))
        }
    }
}

/// A degraded image with its ground truth.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    pub label: DegradationLabel,
    /// Seed the degradation was drawn with.
    pub seed: u64,
}

/// Class index of a label under `task`, given the sorted class keys.
fn class_key(label: &DegradationLabel, task: Task) -> (usize, String) {
    match task {
        Task::Type => (label.kind as usize, label.kind.to_string()),
        Task::Level => (label.level, format!("{}#{}", label.kind, label.level)),
        Task::Order => (usize::from(label.order.unwrap_or(0)), format!("order-{}", label.order.unwrap_or(0))),
    }
}

/// Extracts `method` features for every sample and attaches class indices for `task`.
pub fn feature_set(samples: &[Sample], method: FeatureMethod, task: Task, cfg: &FeatureConfig) -> Result<LabeledFeatureSet> {
    if task == Task::Order && samples.iter().any(|s| s.label.order.is_none()) {
        return Err(Error::Degenerate("order task needs chain samples only".into()));
    }
    if task == Task::Level {
        let kinds: BTreeSet<_> = samples.iter().map(|s| s.label.kind).collect();
        if kinds.len() > 1 {
            return Err(Error::Degenerate(format!("level task mixes kinds {kinds:?}")));
        }
    }
    let keys: BTreeSet<(usize, String)> = samples.iter().map(|s| class_key(&s.label, task)).collect();
    let keys: Vec<(usize, String)> = keys.into_iter().collect();
    let labels = samples
        .iter()
        .map(|s| {
            let k = class_key(&s.label, task);
            keys.iter().position(|x| *x == k).expect("key collected above")
        })
        .collect();
    let features = samples
        .par_iter()
        .map(|s| extract(method, &s.image, cfg).map(|f| f.with_source(s.id.clone())))
        .collect::<Result<Vec<_>>>()?;
    LabeledFeatureSet::new(features, labels, keys.into_iter().map(|k| k.1).collect())
}

/// Degrades every clean image under every spec. Seeds come from `seed`,
/// the image index and the spec index unless the spec fixes one.
pub fn synthesize(clean: &[(String, GrayImage)], specs: &[(DegradationKind, usize, Option<u64>)], seed: u64) -> Result<Vec<Sample>> {
    let jobs: Vec<(usize, usize)> = (0..clean.len())
        .flat_map(|i| (0..specs.len()).map(move |s| (i, s)))
        .collect();
    jobs.par_iter()
        .map(|&(i, s)| {
            let (kind, level, fixed) = specs[s];
            let sample_seed = fixed.unwrap_or_else(|| substream_seed(substream_seed(seed, i as u64), s as u64));
            let spec = DegradeSpec::new(kind, level, sample_seed)?;
            let (name, img) = &clean[i];
            Ok(Sample {
                id: format!("{name}__{}-{}", kind, level),
                image: spec.apply(img)?,
                label: spec.label(),
                seed: sample_seed,
            })
        })
        .collect()
}

/// Settings of the desk reproduction of the type/level benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskConfig {
    pub images: usize,
    pub size: usize,
    pub seed: u64,
    pub k: usize,
    pub standardize: bool,
    pub features: FeatureConfig,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            images: 20,
            size: DEFAULT_CROP,
            seed: 0,
            k: crate::classify::DEFAULT_K,
            standardize: false,
            features: FeatureConfig::default(),
        }
    }
}

/// Clean scenes generated from the desk seed.
pub fn desk_clean_images(cfg: &DeskConfig) -> Vec<(String, GrayImage)> {
    (0..cfg.images)
        .into_par_iter()
        .map(|i| (format!("scene{i:03}"), synthetic_scene(substream_seed(cfg.seed, i as u64), cfg.size)))
        .collect()
}

/// Center-crops every image to `size`.
pub fn crop_all(images: Vec<(String, GrayImage)>, size: usize) -> Result<Vec<(String, GrayImage)>> {
    images
        .into_iter()
        .map(|(n, img)| center_crop(&img, size).map(|c| (n, c)))
        .collect()
}

/// Five benchmark types at their default levels.
pub fn type_specs() -> Vec<(DegradationKind, usize, Option<u64>)> {
    DegradationKind::BENCH_TYPES
        .iter()
        .map(|&k| (k, k.default_level(), None))
        .collect()
}

/// Every level of one kind.
pub fn level_specs(kind: DegradationKind) -> Vec<(DegradationKind, usize, Option<u64>)> {
    (0..kind.level_count()).map(|l| (kind, l, None)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: FeatureMethod,
    pub type_accuracy: Option<f64>,
    pub level_accuracy: Option<f64>,
    pub type_silhouette: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    /// Generator settings when the corpus was synthesized in-process.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<DeskConfig>,
    pub reports: Vec<BenchReport>,
    pub summary: Vec<SummaryRow>,
}

impl BenchSummary {
    pub fn from_reports(config: Option<DeskConfig>, reports: Vec<BenchReport>) -> Self {
        let mut methods: Vec<FeatureMethod> = reports.iter().map(|r| r.method).collect();
        methods.dedup();
        let summary = methods
            .into_iter()
            .map(|m| {
                let find = |t: Task| reports.iter().find(|r| r.method == m && r.task == t);
                SummaryRow {
                    method: m,
                    type_accuracy: find(Task::Type).map(|r| r.accuracy),
                    level_accuracy: find(Task::Level).or(find(Task::Order)).map(|r| r.accuracy),
                    type_silhouette: find(Task::Type).and_then(|r| r.silhouette),
                }
            })
            .collect();
        Self { config, reports, summary }
    }

    pub fn report(&self, method: FeatureMethod, task: Task) -> Option<&BenchReport> {
        self.reports.iter().find(|r| r.method == method && r.task == task)
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_default();
        let mut out = String::from("method,type_acc,level_acc\n");
        for r in &self.summary {
            writeln!(out, "{},{},{}", r.method, fmt(r.type_accuracy), fmt(r.level_accuracy)).expect("string write");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:>8.2}")).unwrap_or_else(|| format!("{:>8}", "-"));
        let mut out = format!("{:<10} {:>8} {:>8} {:>10}\n", "method", "type %", "level %", "silhouette");
        for r in &self.summary {
            let sil = r.type_silhouette.map(|s| format!("{s:>10.4}")).unwrap_or_else(|| format!("{:>10}", "-"));
            writeln!(out, "{:<10} {} {} {}", r.method.as_str(), fmt(r.type_accuracy), fmt(r.level_accuracy), sil)
                .expect("string write");
        }
        out
    }
}

/// Scores `methods` on pre-built samples for one task.
pub fn run_task(samples: &[Sample], methods: &[FeatureMethod], task: Task, features: &FeatureConfig, opts: EvalOptions) -> Result<Vec<BenchReport>> {
    methods
        .iter()
        .map(|&m| evaluate(&feature_set(samples, m, task, features)?, task, opts))
        .collect()
}

/// Generates the desk corpus and runs the type task (five kinds at default
/// levels) and the Gaussian-level task for every method.
pub fn run_desk(cfg: &DeskConfig, methods: &[FeatureMethod]) -> Result<BenchSummary> {
    let clean = desk_clean_images(cfg);
    let opts = EvalOptions {
        k: cfg.k,
        protocol: crate::classify::Protocol::LeaveOneOut,
        standardize: cfg.standardize,
    };
    let types = synthesize(&clean, &type_specs(), substream_seed(cfg.seed, 1 << 32))?;
    let levels = synthesize(&clean, &level_specs(DegradationKind::GaussianNoise), substream_seed(cfg.seed, 2 << 32))?;
    let mut reports = Vec::with_capacity(methods.len() * 2);
    for &m in methods {
        reports.extend(run_task(&types, &[m], Task::Type, &cfg.features, opts)?);
        reports.extend(run_task(&levels, &[m], Task::Level, &cfg.features, opts)?);
    }
    Ok(BenchSummary::from_reports(Some(cfg.clone()), reports))
}
