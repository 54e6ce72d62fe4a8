//! K-nearest-neighbour degradation classification, confusion matrices and
//! silhouette separability.
//!
//! Neighbours are ranked by Euclidean distance with ties broken by the lower
//! training index; votes are unweighted with ties going to the smallest class
//! index. Both rules depend only on indices, so results are independent of
//! evaluation order or thread count.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{FeatureMethod, FeatureVector};
use crate::degrade::seeded_rng;
use crate::{Error, Result};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatureSet {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledFeatureSet {
    pub fn new(features: Vec<FeatureVector>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let set = Self {
            features,
            labels,
            class_names,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} features but {} labels",
                self.features.len(),
                self.labels.len()
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(Error::arg(format!(
                "label {l} but only {} classes",
                self.class_names.len()
            )));
        }
        if let Some(first) = self.features.first() {
            let dim = first.len();
            if let Some(f) = self.features.iter().find(|f| f.len() != dim) {
                return Err(Error::DimensionMismatch(format!(
                    "feature lengths {dim} and {} mixed in one set",
                    f.len()
                )));
            }
            if let Some(f) = self.features.iter().find(|f| f.values.iter().any(|v| !v.is_finite())) {
                return Err(Error::Numerical(format!("non-finite feature in {:?}", f.source_id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, FeatureVector::len)
    }

    pub fn method(&self) -> Option<FeatureMethod> {
        self.features.first().map(|f| f.method)
    }

    /// Copy with every dimension standardized to zero mean, unit variance
    /// (constant dimensions are only centred).
    pub fn standardized(&self) -> Self {
        let (mean, sd) = column_stats(self.features.iter().map(|f| f.values.as_slice()), self.dim());
        let mut out = self.clone();
        for f in &mut out.features {
            standardize_in_place(&mut f.values, &mean, &sd);
        }
        out
    }
}

fn column_stats<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows.clone() {
        n += 1;
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd = var.into_iter().map(|s| (s / n.max(1) as f64).sqrt()).collect();
    (mean, sd)
}

fn standardize_in_place(values: &mut [f64], mean: &[f64], sd: &[f64]) {
    for ((v, m), s) in values.iter_mut().zip(mean).zip(sd) {
        *v -= m;
        if *s > 0.0 {
            *v /= s;
        }
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority vote of the `k` nearest `(distance, index)` candidates.
fn vote(mut candidates: Vec<(f64, usize)>, labels: &[usize], classes: usize, k: usize) -> usize {
    candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut counts = vec![0usize; classes];
    for &(_, i) in candidates.iter().take(k) {
        counts[labels[i]] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    counts.iter().position(|&c| c == best).unwrap_or(0)
}

/// Predicts the class of `query` from its `k` nearest training vectors.
pub fn knn_predict(train: &LabeledFeatureSet, query: &FeatureVector, k: usize) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::Degenerate("empty training set".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::arg(format!("k = {k} with {} training samples", train.len())));
    }
    if query.len() != train.dim() {
        return Err(Error::DimensionMismatch(format!(
            "query has {} dims, training set {}",
            query.len(),
            train.dim()
        )));
    }
    let candidates = train
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| (squared_distance(&f.values, &query.values), i))
        .collect();
    Ok(vote(candidates, &train.labels, train.class_count(), k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Protocol {
    LeaveOneOut,
    Split { train_fraction: f64, seed: u64 },
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::LeaveOneOut
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Type,
    Level,
    Order,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Type => "type",
            Task::Level => "level",
            Task::Order => "order",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "type" => Ok(Task::Type),
            "level" => Ok(Task::Level),
            "order" => Ok(Task::Order),
            other => Err(Error::arg(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub method: FeatureMethod,
    pub task: Task,
    pub k: usize,
    pub protocol: Protocol,
    pub standardized: bool,
    pub class_names: Vec<String>,
    pub tested: usize,
    /// Percentage of correctly classified test samples.
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Mean silhouette over the whole set; absent when a class is a singleton.
    pub silhouette: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub protocol: Protocol,
    pub standardize: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            protocol: Protocol::LeaveOneOut,
            standardize: false,
        }
    }
}

/// Runs the KNN benchmark under `opts.protocol`.
///
/// With standardization enabled, statistics come from the training portion
/// (the whole set for leave-one-out).
pub fn evaluate(corpus: &LabeledFeatureSet, task: Task, opts: EvalOptions) -> Result<BenchReport> {
    corpus.validate()?;
    let method = corpus
        .method()
        .ok_or_else(|| Error::Degenerate("empty corpus".into()))?;
    let present = {
        let mut seen = vec![false; corpus.class_count()];
        corpus.labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if present < 2 {
        return Err(Error::Degenerate(format!("{present} class(es) present, need 2")));
    }
    if opts.k == 0 || corpus.len() < opts.k + 1 {
        return Err(Error::Degenerate(format!(
            "{} samples cannot support k = {}",
            corpus.len(),
            opts.k
        )));
    }

    let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = match opts.protocol {
        Protocol::LeaveOneOut => ((0..corpus.len()).collect(), (0..corpus.len()).collect()),
        Protocol::Split { train_fraction, seed } => {
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(Error::arg(format!("train fraction {train_fraction} outside (0, 1)")));
            }
            let mut idx: Vec<usize> = (0..corpus.len()).collect();
            idx.shuffle(&mut seeded_rng(seed));
            let n_train = ((corpus.len() as f64 * train_fraction).floor() as usize).max(opts.k);
            if n_train >= corpus.len() {
                return Err(Error::Degenerate("split leaves no test samples".into()));
            }
            let test = idx.split_off(n_train);
            idx.sort_unstable();
            let mut test = test;
            test.sort_unstable();
            (idx, test)
        }
    };

    let mut rows: Vec<Vec<f64>> = corpus.features.iter().map(|f| f.values.clone()).collect();
    if opts.standardize {
        let (mean, sd) = column_stats(train_idx.iter().map(|&i| corpus.features[i].values.as_slice()), corpus.dim());
        rows.iter_mut().for_each(|r| standardize_in_place(r, &mean, &sd));
    }

    let loo = matches!(opts.protocol, Protocol::LeaveOneOut);
    let predictions: Vec<usize> = test_idx
        .par_iter()
        .map(|&q| {
            let candidates = train_idx
                .iter()
                .filter(|&&i| !(loo && i == q))
                .map(|&i| (squared_distance(&rows[i], &rows[q]), i))
                .collect();
            vote(candidates, &corpus.labels, corpus.class_count(), opts.k)
        })
        .collect();

    let c = corpus.class_count();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&q, &p) in test_idx.iter().zip(&predictions) {
        confusion[corpus.labels[q]][p] += 1;
    }
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let silhouette = silhouette(
        &rows,
        &corpus.labels,
    )
    .ok();
    Ok(BenchReport {
        method,
        task,
        k: opts.k,
        protocol: opts.protocol,
        standardized: opts.standardize,
        class_names: corpus.class_names.clone(),
        tested: test_idx.len(),
        accuracy: 100.0 * correct as f64 / test_idx.len() as f64,
        confusion,
        silhouette,
    })
}

/// Mean silhouette coefficient under Euclidean distance.
///
/// A point whose intra- and nearest-cluster mean distances are both zero
/// scores 0.
pub fn silhouette<R: AsRef<[f64]> + Sync>(features: &[R], labels: &[usize]) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; classes];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let present: Vec<usize> = (0..classes).filter(|&c| sizes[c] > 0).collect();
    if present.len() < 2 {
        return Err(Error::Degenerate("silhouette needs at least two classes".into()));
    }
    if let Some(&c) = present.iter().find(|&&c| sizes[c] < 2) {
        return Err(Error::Degenerate(format!("class {c} has a single member")));
    }
    let n = features.len();
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; classes];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += squared_distance(features[i].as_ref(), features[j].as_ref()).sqrt();
                }
            }
            let own = labels[i];
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = present
                .iter()
                .filter(|&&c| c != own)
                .map(|&c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn set(points: &[(&[f64], usize)], classes: usize) -> LabeledFeatureSet {
        LabeledFeatureSet::new(
            points
                .iter()
                .enumerate()
                .map(|(i, (v, _))| FeatureVector::new(FeatureMethod::Raw, v.to_vec()).with_source(format!("s{i}")))
                .collect(),
            points.iter().map(|p| p.1).collect(),
            (0..classes).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    fn q(v: &[f64]) -> FeatureVector {
        FeatureVector::new(FeatureMethod::Raw, v.to_vec())
    }

    #[test]
    fn knn_rules() {
        let train = set(&[(&[0.0], 0), (&[1.0], 0), (&[2.0], 1), (&[10.0], 1)], 2);
        assert_eq!(knn_predict(&train, &q(&[10.0]), 1).unwrap(), 1);
        // Neighbours {0: d=0.2, 0: d=0.8, 1: d=1.8} -> class 0.
        assert_eq!(knn_predict(&train, &q(&[0.2]), 3).unwrap(), 0);
        // k=2 picks one of each class: vote tie goes to class 0.
        assert_eq!(knn_predict(&train, &q(&[1.6]), 2).unwrap(), 0);
        // Equal distances: lower training index wins the last neighbour slot.
        let tie = set(&[(&[1.0], 1), (&[-1.0], 0)], 2);
        assert_eq!(knn_predict(&tie, &q(&[0.0]), 1).unwrap(), 1);
    }

    #[test]
    fn knn_errors() {
        let train = set(&[(&[0.0, 1.0], 0), (&[1.0, 1.0], 1)], 2);
        assert!(matches!(knn_predict(&train, &q(&[0.0]), 1), Err(Error::DimensionMismatch(_))));
        assert!(knn_predict(&train, &q(&[0.0, 0.0]), 3).is_err());
        let empty = LabeledFeatureSet::new(vec![], vec![], vec!["a".into()]).unwrap();
        assert!(matches!(knn_predict(&empty, &q(&[0.0]), 1), Err(Error::Degenerate(_))));
        assert!(LabeledFeatureSet::new(vec![q(&[0.0])], vec![3], vec!["a".into()]).is_err());
        assert!(LabeledFeatureSet::new(vec![q(&[0.0]), q(&[0.0, 1.0])], vec![0, 0], vec!["a".into()]).is_err());
    }

    #[test]
    fn separated_clusters_loo() {
        let pts: Vec<(Vec<f64>, usize)> = (0..10)
            .map(|i| (vec![i as f64 * 0.01, 0.0], 0))
            .chain((0..10).map(|i| (vec![100.0 + i as f64 * 0.01, 5.0], 1)))
            .collect();
        let refs: Vec<(&[f64], usize)> = pts.iter().map(|(v, l)| (v.as_slice(), *l)).collect();
        let s = set(&refs, 2);
        let opts = EvalOptions { k: 1, ..Default::default() };
        let r = evaluate(&s, Task::Type, opts).unwrap();
        assert_eq!(r.accuracy, 100.0);
        assert_eq!(r.confusion, vec![vec![10, 0], vec![0, 10]]);
        assert!(r.silhouette.unwrap() > 0.9);
        // Leave-nothing-out: each training point is its own nearest neighbour.
        for (f, &l) in s.features.iter().zip(&s.labels) {
            assert_eq!(knn_predict(&s, f, 1).unwrap(), l);
        }
        let split = evaluate(&s, Task::Type, EvalOptions { k: 1, protocol: Protocol::Split { train_fraction: 0.5, seed: 3 }, standardize: true }).unwrap();
        assert_eq!(split.accuracy, 100.0);
        assert_eq!(split.tested, 10);
        assert!(split.standardized);
    }

    #[test]
    fn shuffled_labels_near_chance() {
        // 4 classes, 800 points of pure noise: the accuracy is Binomial(800, 1/4)/800,
        // sd ~ 1.5%, so 25 ± 6 points is a > 3.9 sigma band.
        let mut rng = seeded_rng(77);
        let pts: Vec<(Vec<f64>, usize)> = (0..800)
            .map(|_| ((0..4).map(|_| rng.gen::<f64>()).collect(), rng.gen_range(0..4)))
            .collect();
        let refs: Vec<(&[f64], usize)> = pts.iter().map(|(v, l)| (v.as_slice(), *l)).collect();
        let r = evaluate(&set(&refs, 4), Task::Type, EvalOptions::default()).unwrap();
        assert!((r.accuracy - 25.0).abs() < 6.0, "accuracy {}", r.accuracy);
        let trace: usize = (0..4).map(|i| r.confusion[i][i]).sum();
        assert!((trace as f64 / r.tested as f64 * 100.0 - r.accuracy).abs() < 1e-12);
        let row_sums: Vec<usize> = r.confusion.iter().map(|row| row.iter().sum()).collect();
        let mut per_class = vec![0usize; 4];
        pts.iter().for_each(|p| per_class[p.1] += 1);
        assert_eq!(row_sums, per_class);
    }

    #[test]
    fn evaluate_is_deterministic() {
        let mut rng = seeded_rng(5);
        let pts: Vec<(Vec<f64>, usize)> = (0..60)
            .map(|i| ((0..3).map(|_| rng.gen::<f64>() + (i % 3) as f64 * 0.3).collect(), i % 3))
            .collect();
        let refs: Vec<(&[f64], usize)> = pts.iter().map(|(v, l)| (v.as_slice(), *l)).collect();
        let s = set(&refs, 3);
        let opts = EvalOptions { k: 5, protocol: Protocol::Split { train_fraction: 0.7, seed: 11 }, standardize: false };
        let a = serde_json::to_string(&evaluate(&s, Task::Level, opts).unwrap()).unwrap();
        let b = serde_json::to_string(&evaluate(&s, Task::Level, opts).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluate_rejects_degenerate() {
        let s = set(&[(&[0.0], 0), (&[1.0], 0), (&[2.0], 0)], 2);
        assert!(matches!(evaluate(&s, Task::Type, EvalOptions { k: 1, ..Default::default() }), Err(Error::Degenerate(_))));
        let s = set(&[(&[0.0], 0), (&[1.0], 1)], 2);
        assert!(evaluate(&s, Task::Type, EvalOptions { k: 5, ..Default::default() }).is_err());
    }

    #[test]
    fn silhouette_cases() {
        // Two tight pairs 10 apart: a = 0.1, b ~ 10, s ~ 0.99.
        let f = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 0.0], vec![10.1, 0.0]];
        let s = silhouette(&f, &[0, 0, 1, 1]).unwrap();
        let expected = {
            let s0 = (10.05 - 0.1) / 10.05;
            let s1 = (9.95 - 0.1) / 9.95;
            (s0 + s1) / 2.0
        };
        assert!((s - expected).abs() < 1e-12 && s > 0.9);

        let same = vec![vec![1.0, 1.0]; 4];
        assert_eq!(silhouette(&same, &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(matches!(silhouette(&f, &[0, 0, 0, 1]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn silhouette_isometry_invariant() {
        let mut rng = seeded_rng(8);
        let f: Vec<Vec<f64>> = (0..30).map(|i| vec![rng.gen::<f64>() + (i % 3) as f64, rng.gen::<f64>()]).collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let (c, s) = (0.6f64, 0.8f64);
        let moved: Vec<Vec<f64>> = f.iter().map(|v| vec![c * v[0] - s * v[1] + 3.0, s * v[0] + c * v[1] - 7.0]).collect();
        let a = silhouette(&f, &labels).unwrap();
        let b = silhouette(&moved, &labels).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&a));
    }
}
