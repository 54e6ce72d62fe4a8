//! Training objectives of the three-stage residual diffusion scheme, as pure
//! functions on supplied predictions and feature batches.
//!
//! Every loss has a `*_with_grad` twin returning the analytic gradient with
//! respect to its prediction-side inputs; [`gradcheck`] verifies those against
//! central finite differences.
//!
//! Reductions: [`l_gen`], [`l_deg_cls`] and the L1 term of [`l_rft`] average
//! over the batch; [`l_bridge`] averages over rows in each direction;
//! [`l_fcnl`] is an unnormalized double sum.

pub mod gradcheck;

use serde::{Deserialize, Serialize};

use crate::diffusion::Stage;
use crate::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

/// Which network a feature batch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    Mas,
    Diff,
}

/// `rows` feature vectors of dimension `dim`, row-major. No row may be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    source: FeatureSource,
}

impl FeatureBatch {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>, source: FeatureSource) -> Result<Self> {
        if rows == 0 || dim == 0 || data.len() != rows * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{dim} batch",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite feature value".into()));
        }
        if let Some(r) = data.chunks(dim).position(|row| row.iter().all(|&v| v == 0.0)) {
            return Err(Error::Numerical(format!("feature row {r} has zero norm")));
        }
        Ok(Self {
            rows,
            dim,
            data,
            source,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Stage gating and weighting shared by the composite objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: Stage,
    pub lambda: f64,
    pub real_world: bool,
    pub temperature: f64,
}

impl StageConfig {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            lambda: DEFAULT_LAMBDA,
            real_world: false,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn real_world(mut self, on: bool) -> Self {
        self.real_world = on;
        self
    }

    pub fn lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    fn require(&self, stage: Stage, what: &str) -> Result<()> {
        if self.stage != stage {
            return Err(Error::Gating(format!(
                "{what} belongs to the {stage} stage, not {}",
                self.stage
            )));
        }
        Ok(())
    }
}

/// Per-step schedule coefficients entering the generation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub beta_bar: f64,
}

impl StepCoefficients {
    /// Weight `β_t² / β̄_t` of the noise error.
    pub fn noise_weight(&self) -> f64 {
        self.beta * self.beta / self.beta_bar
    }
}

/// Predicted and true residual/noise fields for a batch of `batch` samples.
#[derive(Debug, Clone, Copy)]
pub struct GenInputs<'a> {
    pub res_pred: &'a [f64],
    pub res_true: &'a [f64],
    pub eps_pred: &'a [f64],
    pub eps_true: &'a [f64],
    pub batch: usize,
}

impl GenInputs<'_> {
    fn check(&self) -> Result<()> {
        let n = self.res_pred.len();
        if self.res_true.len() != n || self.eps_pred.len() != n || self.eps_true.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "generation inputs of lengths {}, {}, {}, {}",
                n,
                self.res_true.len(),
                self.eps_pred.len(),
                self.eps_true.len()
            )));
        }
        if self.batch == 0 || n % self.batch != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{n} values cannot form {} samples",
                self.batch
            )));
        }
        Ok(())
    }
}

/// Batch mean of `‖α(res_pred − res) + (β²/β̄)(eps_pred − eps)‖²`.
pub fn l_gen(inputs: GenInputs<'_>, coeffs: StepCoefficients) -> Result<f64> {
    l_gen_with_grad(inputs, coeffs).map(|(v, _, _)| v)
}

/// Value and gradients with respect to `res_pred` and `eps_pred`.
pub fn l_gen_with_grad(inputs: GenInputs<'_>, coeffs: StepCoefficients) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    inputs.check()?;
    if coeffs.beta_bar == 0.0 {
        return Err(Error::arg("beta_bar_t must be non-zero"));
    }
    let c = coeffs.noise_weight();
    let n = inputs.batch as f64;
    let mut value = 0.0;
    let mut g_res = Vec::with_capacity(inputs.res_pred.len());
    let mut g_eps = Vec::with_capacity(inputs.res_pred.len());
    for i in 0..inputs.res_pred.len() {
        let r = coeffs.alpha * (inputs.res_pred[i] - inputs.res_true[i])
            + c * (inputs.eps_pred[i] - inputs.eps_true[i]);
        value += r * r;
        g_res.push(2.0 * coeffs.alpha * r / n);
        g_eps.push(2.0 * c * r / n);
    }
    Ok((value / n, g_res, g_eps))
}

fn normalize_rows(b: &FeatureBatch) -> (Vec<f64>, Vec<f64>) {
    let mut unit = b.data.clone();
    let mut norms = Vec::with_capacity(b.rows);
    for row in unit.chunks_mut(b.dim) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    (unit, norms)
}

/// Pulls a gradient on unit rows back through `x / ‖x‖`.
fn unnormalize_grad(grad_unit: &[f64], unit: &[f64], norms: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; grad_unit.len()];
    for (r, &norm) in norms.iter().enumerate() {
        let span = r * dim..(r + 1) * dim;
        let u = &unit[span.clone()];
        let g = &grad_unit[span.clone()];
        let dot: f64 = u.iter().zip(g).map(|(a, b)| a * b).sum();
        for ((o, gi), ui) in out[span].iter_mut().zip(g).zip(u) {
            *o = (gi - ui * dot) / norm;
        }
    }
    out
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Symmetric contrastive alignment: half the sum of the mas→diff and
/// diff→mas cross-entropies of softmaxed cosine similarities (scaled by
/// `1/temperature`) against the identity matching.
pub fn l_bridge(f_mas: &FeatureBatch, f_diff: &FeatureBatch, temperature: f64) -> Result<f64> {
    l_bridge_with_grad(f_mas, f_diff, temperature).map(|(v, _, _)| v)
}

/// Value and gradients with respect to the raw (unnormalized) rows of both batches.
pub fn l_bridge_with_grad(f_mas: &FeatureBatch, f_diff: &FeatureBatch, temperature: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if f_mas.rows != f_diff.rows || f_mas.dim != f_diff.dim {
        return Err(Error::DimensionMismatch(format!(
            "bridge batches {}x{} and {}x{}",
            f_mas.rows, f_mas.dim, f_diff.rows, f_diff.dim
        )));
    }
    if f_mas.rows < 2 {
        return Err(Error::arg("bridge loss needs at least two rows"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::arg(format!("temperature must be positive, got {temperature}")));
    }
    let (n, d) = (f_mas.rows, f_mas.dim);
    let (um, nm) = normalize_rows(f_mas);
    let (ud, nd) = normalize_rows(f_diff);
    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = um[i * d..(i + 1) * d].iter().zip(&ud[j * d..(j + 1) * d]).map(|(a, b)| a * b).sum();
            sim[i * n + j] = dot / temperature;
        }
    }
    // dL/dS = (P_row - I + P_col - I) / (2n)
    let mut d_sim = vec![0.0; n * n];
    let mut loss_m2d = 0.0;
    for i in 0..n {
        let row = &sim[i * n..(i + 1) * n];
        let lse = log_sum_exp(row.iter().copied());
        loss_m2d += lse - row[i];
        for j in 0..n {
            d_sim[i * n + j] += (row[j] - lse).exp();
        }
        d_sim[i * n + i] -= 1.0;
    }
    let mut loss_d2m = 0.0;
    for j in 0..n {
        let col = (0..n).map(|i| sim[i * n + j]);
        let lse = log_sum_exp(col);
        loss_d2m += lse - sim[j * n + j];
        for i in 0..n {
            d_sim[i * n + j] += (sim[i * n + j] - lse).exp();
        }
        d_sim[j * n + j] -= 1.0;
    }
    let scale = 1.0 / (2.0 * n as f64);
    let value = 0.5 * (loss_m2d + loss_d2m) / n as f64;

    let mut g_um = vec![0.0; n * d];
    let mut g_ud = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..n {
            let g = d_sim[i * n + j] * scale / temperature;
            for k in 0..d {
                g_um[i * d + k] += g * ud[j * d + k];
                g_ud[j * d + k] += g * um[i * d + k];
            }
        }
    }
    Ok((
        value,
        unnormalize_grad(&g_um, &um, &nm, d),
        unnormalize_grad(&g_ud, &ud, &nd, d),
    ))
}

/// Mean softmax cross-entropy of `batch × classes` logits.
pub fn l_deg_cls(logits: &[f64], classes: usize, labels: &[usize]) -> Result<f64> {
    l_deg_cls_with_grad(logits, classes, labels).map(|(v, _)| v)
}

pub fn l_deg_cls_with_grad(logits: &[f64], classes: usize, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    if classes == 0 || logits.len() != labels.len() * classes || labels.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} logits for {} labels and {classes} classes",
            logits.len(),
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::arg(format!("label {l} out of range for {classes} classes")));
    }
    let n = labels.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks(classes).zip(labels) {
        let lse = log_sum_exp(row.iter().copied());
        value += lse - row[label];
        for (c, &z) in row.iter().enumerate() {
            let p = (z - lse).exp();
            grad.push((p - if c == label { 1.0 } else { 0.0 }) / n);
        }
    }
    Ok((value / n, grad))
}

/// Already-evaluated terms of the bridging objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdgComponents {
    pub gen: f64,
    pub bridge: f64,
    pub deg_cls: f64,
}

/// `L_gen + λ(L_bridge + L_deg-cls)`; only valid in the bridging stage.
pub fn l_bdg(components: BdgComponents, stage: &StageConfig) -> Result<f64> {
    stage.require(Stage::Bridging, "the bridging objective")?;
    Ok(components.gen + stage.lambda * (components.bridge + components.deg_cls))
}

/// Mean absolute error plus `λ·L_bridge`, with `λ·L_fcnl` added in the
/// real-world variant. Only valid in the restoration fine-tuning stage, and
/// `fcnl` must be supplied exactly when `stage.real_world` is set.
pub fn l_rft(x_pred: &[f64], x_gt: &[f64], bridge: f64, fcnl: Option<f64>, stage: &StageConfig) -> Result<f64> {
    l_rft_with_grad(x_pred, x_gt, bridge, fcnl, stage).map(|(v, _)| v)
}

/// Value and (sub)gradient with respect to `x_pred`; coordinates where
/// `x_pred == x_gt` get gradient 0.
pub fn l_rft_with_grad(x_pred: &[f64], x_gt: &[f64], bridge: f64, fcnl: Option<f64>, stage: &StageConfig) -> Result<(f64, Vec<f64>)> {
    stage.require(Stage::Restoration, "the fine-tuning objective")?;
    match (stage.real_world, fcnl) {
        (false, Some(_)) => {
            return Err(Error::Gating(
                "full-negative contrastive term supplied without the real-world flag".into(),
            ))
        }
        (true, None) => {
            return Err(Error::Gating(
                "real-world fine-tuning requires the full-negative contrastive term".into(),
            ))
        }
        _ => {}
    }
    if x_pred.len() != x_gt.len() || x_pred.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} values, ground truth {}",
            x_pred.len(),
            x_gt.len()
        )));
    }
    let n = x_pred.len() as f64;
    let l1 = x_pred.iter().zip(x_gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / n;
    let grad = x_pred
        .iter()
        .zip(x_gt)
        .map(|(p, g)| {
            let d = p - g;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((l1 + stage.lambda * (bridge + fcnl.unwrap_or(0.0)), grad))
}

/// `Σ_i Σ_j (1 − cos(b1_i, b2_j))` over all cross pairs.
pub fn l_fcnl(batch1: &FeatureBatch, batch2: &FeatureBatch) -> Result<f64> {
    l_fcnl_with_grad(batch1, batch2).map(|(v, _, _)| v)
}

/// Full-negative contrastive loss under stage gating: rejected outside the
/// restoration fine-tuning stage.
pub fn l_fcnl_in_stage(batch1: &FeatureBatch, batch2: &FeatureBatch, stage: &StageConfig) -> Result<f64> {
    stage.require(Stage::Restoration, "the full-negative contrastive loss")?;
    if !stage.real_world {
        return Err(Error::Gating("full-negative contrastive loss is real-world only".into()));
    }
    l_fcnl(batch1, batch2)
}

pub fn l_fcnl_with_grad(batch1: &FeatureBatch, batch2: &FeatureBatch) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if batch1.dim != batch2.dim {
        return Err(Error::DimensionMismatch(format!(
            "feature dims {} and {}",
            batch1.dim, batch2.dim
        )));
    }
    let d = batch1.dim;
    let (u1, n1) = normalize_rows(batch1);
    let (u2, n2) = normalize_rows(batch2);
    // Σ_ij (1 - u1_i·u2_j) = N1·N2 - (Σ_i u1_i)·(Σ_j u2_j)
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![0.0; d];
    for row in u1.chunks(d) {
        s1.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    for row in u2.chunks(d) {
        s2.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    let cross: f64 = s1.iter().zip(&s2).map(|(a, b)| a * b).sum();
    let value = (batch1.rows * batch2.rows) as f64 - cross;
    let g_u1: Vec<f64> = (0..batch1.rows).flat_map(|_| s2.iter().map(|v| -v)).collect();
    let g_u2: Vec<f64> = (0..batch2.rows).flat_map(|_| s1.iter().map(|v| -v)).collect();
    Ok((
        value,
        unnormalize_grad(&g_u1, &u1, &n1, d),
        unnormalize_grad(&g_u2, &u2, &n2, d),
    ))
}
