//! Central finite-difference verification of the analytic loss gradients.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::*;

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// The six objectives with analytic gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossId {
    Gen,
    Bridge,
    DegCls,
    Bdg,
    Rft,
    Fcnl,
}

impl LossId {
    pub const ALL: [LossId; 6] = [
        LossId::Gen,
        LossId::Bridge,
        LossId::DegCls,
        LossId::Bdg,
        LossId::Rft,
        LossId::Fcnl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossId::Gen => "gen",
            LossId::Bridge => "bridge",
            LossId::DegCls => "deg-cls",
            LossId::Bdg => "bdg",
            LossId::Rft => "rft",
            LossId::Fcnl => "fcnl",
        }
    }
}

impl fmt::Display for LossId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        let s = s.strip_prefix("l-").unwrap_or(&s);
        LossId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown loss '{s}'")))
    }
}

#[derive(Debug, Clone)]
struct BridgePart {
    rows: usize,
    dim: usize,
    temperature: f64,
}

#[derive(Debug, Clone)]
struct GenPart {
    len: usize,
    batch: usize,
    res_true: Vec<f64>,
    eps_true: Vec<f64>,
    coeffs: StepCoefficients,
}

#[derive(Debug, Clone)]
struct ClsPart {
    classes: usize,
    labels: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Problem {
    Gen(GenPart),
    Bridge(BridgePart),
    DegCls(ClsPart),
    Bdg(GenPart, BridgePart, ClsPart, StageConfig),
    Rft {
        x_gt: Vec<f64>,
        bridge: BridgePart,
        fcnl: Option<(usize, usize)>,
        stage: StageConfig,
    },
    Fcnl {
        rows1: usize,
        rows2: usize,
        dim: usize,
    },
}

/// One loss evaluated at a concrete point; `params` are the differentiable
/// inputs flattened in a fixed order, everything else is held constant.
#[derive(Debug, Clone)]
pub struct LossInstance {
    id: LossId,
    params: Vec<f64>,
    problem: Problem,
}

fn split(params: &[f64], at: usize) -> (&[f64], &[f64]) {
    params.split_at(at)
}

fn fb(rows: usize, dim: usize, data: &[f64], source: FeatureSource) -> Result<FeatureBatch> {
    FeatureBatch::new(rows, dim, data.to_vec(), source)
}

impl GenPart {
    fn eval(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (res_pred, eps_pred) = split(p, self.len);
        let inputs = GenInputs {
            res_pred,
            res_true: &self.res_true,
            eps_pred,
            eps_true: &self.eps_true,
            batch: self.batch,
        };
        let (v, mut g, g_eps) = l_gen_with_grad(inputs, self.coeffs)?;
        g.extend(g_eps);
        Ok((v, g))
    }

    fn width(&self) -> usize {
        2 * self.len
    }
}

impl BridgePart {
    fn eval(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.rows * self.dim;
        let (m, d) = split(p, n);
        let (v, mut g, g_d) = l_bridge_with_grad(
            &fb(self.rows, self.dim, m, FeatureSource::Mas)?,
            &fb(self.rows, self.dim, d, FeatureSource::Diff)?,
            self.temperature,
        )?;
        g.extend(g_d);
        Ok((v, g))
    }

    fn width(&self) -> usize {
        2 * self.rows * self.dim
    }
}

impl ClsPart {
    fn eval(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        l_deg_cls_with_grad(p, self.classes, &self.labels)
    }

    fn width(&self) -> usize {
        self.classes * self.labels.len()
    }
}

fn fcnl_eval(rows1: usize, rows2: usize, dim: usize, p: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (a, b) = split(p, rows1 * dim);
    let (v, mut g, g2) = l_fcnl_with_grad(
        &fb(rows1, dim, a, FeatureSource::Mas)?,
        &fb(rows2, dim, b, FeatureSource::Mas)?,
    )?;
    g.extend(g2);
    Ok((v, g))
}

fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

fn random_gen<R: Rng>(rng: &mut R) -> (GenPart, Vec<f64>) {
    let batch = rng.gen_range(1..=8);
    let len = batch * rng.gen_range(1..=16);
    let beta = rng.gen_range(0.01..0.5);
    let part = GenPart {
        len,
        batch,
        res_true: gaussian_vec(rng, len),
        eps_true: gaussian_vec(rng, len),
        coeffs: StepCoefficients {
            alpha: rng.gen_range(0.0..1.0),
            beta,
            beta_bar: rng.gen_range(beta..1.0),
        },
    };
    (part, gaussian_vec(rng, 2 * len))
}

fn random_bridge<R: Rng>(rng: &mut R) -> (BridgePart, Vec<f64>) {
    let part = BridgePart {
        rows: rng.gen_range(2..=8),
        dim: rng.gen_range(2..=16),
        temperature: rng.gen_range(0.5..2.0),
    };
    let p = gaussian_vec(rng, part.width());
    (part, p)
}

fn random_cls<R: Rng>(rng: &mut R) -> (ClsPart, Vec<f64>) {
    let classes = rng.gen_range(2..=8);
    let labels: Vec<usize> = (0..rng.gen_range(1..=8)).map(|_| rng.gen_range(0..classes)).collect();
    let part = ClsPart { classes, labels };
    let p = gaussian_vec(rng, part.width()).into_iter().map(|v| 2.0 * v).collect();
    (part, p)
}

impl LossInstance {
    /// Draws a random instance of `id` with `N ≤ 8`, `D ≤ 16`. For the L1
    /// term every `|x_pred − x_gt|` coordinate stays at least `10·epsilon`
    /// away from the kink.
    pub fn random<R: Rng>(id: LossId, rng: &mut R, epsilon: f64) -> Self {
        let (problem, params) = match id {
            LossId::Gen => {
                let (g, p) = random_gen(rng);
                (Problem::Gen(g), p)
            }
            LossId::Bridge => {
                let (b, p) = random_bridge(rng);
                (Problem::Bridge(b), p)
            }
            LossId::DegCls => {
                let (c, p) = random_cls(rng);
                (Problem::DegCls(c), p)
            }
            LossId::Bdg => {
                let (g, mut p) = random_gen(rng);
                let (b, pb) = random_bridge(rng);
                let (c, pc) = random_cls(rng);
                p.extend(pb);
                p.extend(pc);
                (Problem::Bdg(g, b, c, StageConfig::new(Stage::Bridging)), p)
            }
            LossId::Rft => {
                let n = rng.gen_range(1..=16);
                let x_gt = gaussian_vec(rng, n);
                let margin = 10.0 * epsilon;
                let x_pred: Vec<f64> = x_gt
                    .iter()
                    .map(|g| loop {
                        let x = g + rng.gen_range(-1.0..1.0);
                        if (x - g).abs() >= margin {
                            break x;
                        }
                    })
                    .collect();
                let (bridge, pb) = random_bridge(rng);
                let real_world = rng.gen_bool(0.5);
                let mut params = x_pred;
                params.extend(pb);
                let fcnl = real_world.then(|| {
                    let shape = (rng.gen_range(1..=8), rng.gen_range(1..=8));
                    params.extend(gaussian_vec(rng, (shape.0 + shape.1) * bridge.dim));
                    shape
                });
                let stage = StageConfig::new(Stage::Restoration).real_world(real_world);
                (Problem::Rft { x_gt, bridge, fcnl, stage }, params)
            }
            LossId::Fcnl => {
                let (rows1, rows2, dim) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=16));
                (Problem::Fcnl { rows1, rows2, dim }, gaussian_vec(rng, (rows1 + rows2) * dim))
            }
        };
        Self { id, params, problem }
    }

    pub fn id(&self) -> LossId {
        self.id
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Loss value and analytic gradient at `params`.
    pub fn eval(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for an instance of size {}",
                params.len(),
                self.params.len()
            )));
        }
        match &self.problem {
            Problem::Gen(g) => g.eval(params),
            Problem::Bridge(b) => b.eval(params),
            Problem::DegCls(c) => c.eval(params),
            Problem::Bdg(g, b, c, stage) => {
                let (pg, rest) = split(params, g.width());
                let (pb, pc) = split(rest, b.width());
                let (vg, mut grad) = g.eval(pg)?;
                let (vb, gb) = b.eval(pb)?;
                let (vc, gc) = c.eval(pc)?;
                let parts = BdgComponents { gen: vg, bridge: vb, deg_cls: vc };
                let value = l_bdg(parts, stage)?;
                grad.extend(gb.iter().chain(&gc).map(|v| stage.lambda * v));
                Ok((value, grad))
            }
            Problem::Rft { x_gt, bridge, fcnl, stage } => {
                let (px, rest) = split(params, x_gt.len());
                let (pb, pf) = split(rest, bridge.width());
                let (vb, gb) = bridge.eval(pb)?;
                let f = fcnl.map(|(r1, r2)| fcnl_eval(r1, r2, bridge.dim, pf)).transpose()?;
                let (value, mut grad) = l_rft_with_grad(px, x_gt, vb, f.as_ref().map(|f| f.0), stage)?;
                grad.extend(gb.iter().map(|v| stage.lambda * v));
                if let Some((_, gf)) = f {
                    grad.extend(gf.iter().map(|v| stage.lambda * v));
                }
                Ok((value, grad))
            }
            Problem::Fcnl { rows1, rows2, dim } => fcnl_eval(*rows1, *rows2, *dim, params),
        }
    }
}

/// Max over coordinates of `|g_a − g_fd| / max(1, |g_a|, |g_fd|)` with
/// central differences of step `epsilon`.
pub fn grad_check(instance: &LossInstance, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::arg(format!("epsilon must be positive, got {epsilon}")));
    }
    let (_, analytic) = instance.eval(&instance.params)?;
    if analytic.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("non-finite analytic gradient for {}", instance.id)));
    }
    let mut x = instance.params.clone();
    let mut worst = 0.0f64;
    for (i, &ga) in analytic.iter().enumerate() {
        let orig = x[i];
        x[i] = orig + epsilon;
        let (plus, _) = instance.eval(&x)?;
        x[i] = orig - epsilon;
        let (minus, _) = instance.eval(&x)?;
        x[i] = orig;
        let gfd = (plus - minus) / (2.0 * epsilon);
        if !gfd.is_finite() {
            return Err(Error::Numerical(format!("non-finite difference quotient for {}", instance.id)));
        }
        worst = worst.max((ga - gfd).abs() / 1f64.max(ga.abs()).max(gfd.abs()));
    }
    Ok(worst)
}

/// Aggregate over `trials` random instances of one loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRecord {
    pub loss: LossId,
    pub trials: usize,
    pub epsilon: f64,
    pub max_relative_error: f64,
}

/// Runs `trials` random checks of `id`, drawing instances from `rng`.
pub fn sweep<R: Rng>(id: LossId, trials: usize, epsilon: f64, rng: &mut R) -> Result<GradCheckRecord> {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let inst = LossInstance::random(id, rng, epsilon);
        worst = worst.max(grad_check(&inst, epsilon)?);
    }
    Ok(GradCheckRecord {
        loss: id,
        trials,
        epsilon,
        max_relative_error: worst,
    })
}
