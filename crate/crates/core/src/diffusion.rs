//! Residual-conditioned diffusion: coefficient schedules for the three
//! training stages, forward diffusion, deterministic reverse sampling and an
//! algebraic oracle predictor for verification.
//!
//! Step indexing: `t = 0` is clean data. Schedule arrays have length `T + 1`;
//! index 0 holds the zero sentinel, index `t` the value for step `t`.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayD, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_KAPPA: f64 = 0.1;
pub const DEFAULT_ETA: f64 = 0.1;

/// Training stage, which decides which conditioning coefficients are zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Noise only: `α ≡ δ ≡ 0`.
    Generation,
    /// Residual bridge without LQ subtraction: `δ ≡ 0`.
    Bridging,
    /// Full update with `α_t ≠ δ_t` (also the restoration fine-tuning stage).
    #[serde(alias = "rft")]
    Restoration,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Generation, Stage::Bridging, Stage::Restoration];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generation => "generation",
            Stage::Bridging => "bridging",
            Stage::Restoration => "restoration",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "generation" | "gen" => Ok(Stage::Generation),
            "bridging" | "bdg" => Ok(Stage::Bridging),
            "restoration" | "rft" => Ok(Stage::Restoration),
            other => Err(Error::arg(format!("unknown stage '{other}'"))),
        }
    }
}

/// Parameters of the default schedule family.
///
/// With progress `s_t = (t/T)^shape`: `ᾱ_t = s_t`, `β̄_t = κ·sqrt(s_t)`,
/// `δ̄_t = η·s_t`. `shape = 1` gives the linear ramps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub kappa: f64,
    pub eta: f64,
    pub shape: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            eta: DEFAULT_ETA,
            shape: 1.0,
        }
    }
}

/// Per-step and cumulative coefficients of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr")]
pub struct DiffusionSchedule {
    stage: Stage,
    steps: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    delta: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_bar: Vec<f64>,
    delta_bar: Vec<f64>,
}

#[derive(Deserialize)]
struct ScheduleRepr {
    stage: Stage,
    alpha_bar: Vec<f64>,
    beta_bar: Vec<f64>,
    delta_bar: Vec<f64>,
}

impl TryFrom<ScheduleRepr> for DiffusionSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        DiffusionSchedule::from_cumulative(r.stage, r.alpha_bar, r.beta_bar, r.delta_bar)
    }
}

/// Builds the default-family schedule for `stage`.
pub fn make_schedule(steps: usize, stage: Stage, params: ScheduleParams) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return Err(Error::Schedule("step count must be at least 1".into()));
    }
    let ScheduleParams { kappa, eta, shape } = params;
    if !(kappa > 0.0 && kappa.is_finite()) || !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::Schedule(format!(
            "kappa = {kappa}, shape = {shape} do not give a strictly increasing noise level"
        )));
    }
    if !eta.is_finite() {
        return Err(Error::Schedule(format!("eta must be finite, got {eta}")));
    }
    if stage == Stage::Restoration && eta == 1.0 {
        return Err(Error::Schedule(
            "eta = 1 makes alpha_t equal delta_t in the restoration stage".into(),
        ));
    }
    let progress: Vec<f64> = (0..=steps)
        .map(|t| (t as f64 / steps as f64).powf(shape))
        .collect();
    let alpha_bar = match stage {
        Stage::Generation => vec![0.0; steps + 1],
        _ => progress.clone(),
    };
    let delta_bar = match stage {
        Stage::Restoration => progress.iter().map(|s| eta * s).collect(),
        _ => vec![0.0; steps + 1],
    };
    let beta_bar = progress.iter().map(|s| kappa * s.sqrt()).collect();
    DiffusionSchedule::from_cumulative(stage, alpha_bar, beta_bar, delta_bar)
}

fn differences(cumulative: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(cumulative.windows(2).map(|w| w[1] - w[0]))
        .collect()
}

impl DiffusionSchedule {
    /// Builds a schedule from cumulative arrays of length `T + 1`, deriving
    /// the per-step values by differencing (`β` in quadrature).
    pub fn from_cumulative(stage: Stage, alpha_bar: Vec<f64>, beta_bar: Vec<f64>, delta_bar: Vec<f64>) -> Result<Self> {
        let len = beta_bar.len();
        if len < 2 || alpha_bar.len() != len || delta_bar.len() != len {
            return Err(Error::Schedule(format!(
                "cumulative arrays must share a length of at least 2, got {}, {}, {}",
                alpha_bar.len(),
                len,
                delta_bar.len()
            )));
        }
        if alpha_bar.iter().chain(&beta_bar).chain(&delta_bar).any(|v| !v.is_finite()) {
            return Err(Error::Schedule("non-finite schedule value".into()));
        }
        if alpha_bar[0] != 0.0 || beta_bar[0] != 0.0 || delta_bar[0] != 0.0 {
            return Err(Error::Schedule("cumulative values at t = 0 must be 0".into()));
        }
        if let Some(t) = beta_bar.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Schedule(format!(
                "noise level is not strictly increasing at t = {}",
                t + 1
            )));
        }
        let alpha = differences(&alpha_bar);
        let delta = differences(&delta_bar);
        let beta: Vec<f64> = std::iter::once(0.0)
            .chain(beta_bar.windows(2).map(|w| (w[1] * w[1] - w[0] * w[0]).sqrt()))
            .collect();
        let schedule = Self {
            stage,
            steps: len - 1,
            alpha,
            beta,
            delta,
            alpha_bar,
            beta_bar,
            delta_bar,
        };
        schedule.check_stage()?;
        Ok(schedule)
    }

    fn check_stage(&self) -> Result<()> {
        let steps = 1..=self.steps;
        match self.stage {
            Stage::Generation => {
                if steps.clone().any(|t| self.alpha[t] != 0.0 || self.delta[t] != 0.0) {
                    return Err(Error::Schedule(
                        "generation stage requires alpha and delta to vanish".into(),
                    ));
                }
            }
            Stage::Bridging => {
                if steps.clone().any(|t| self.delta[t] != 0.0) {
                    return Err(Error::Schedule("bridging stage requires delta to vanish".into()));
                }
            }
            Stage::Restoration => {
                if let Some(t) = steps.clone().find(|&t| self.alpha[t] == self.delta[t]) {
                    return Err(Error::Schedule(format!(
                        "restoration stage requires alpha_t != delta_t, equal at t = {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn beta_bar(&self) -> &[f64] {
        &self.beta_bar
    }

    pub fn delta_bar(&self) -> &[f64] {
        &self.delta_bar
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::arg(format!("step {t} outside 1..={}", self.steps)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `β_t² β̄_{t−1}² / β̄_t²`, the variance of the reverse posterior.
pub fn posterior_variance(t: usize, schedule: &DiffusionSchedule) -> Result<f64> {
    schedule.check_step(t)?;
    let (b, prev, bar) = (schedule.beta[t], schedule.beta_bar[t - 1], schedule.beta_bar[t]);
    Ok(b * b * prev * prev / (bar * bar))
}

fn same_shape(what: &str, a: &ArrayD<f64>, b: &ArrayD<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: shape {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// A diffusion state together with its conditioning fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub x_t: ArrayD<f64>,
    pub t: usize,
    pub x_lq: ArrayD<f64>,
    pub x_res: ArrayD<f64>,
}

impl DiffusionState {
    /// State at `t = 0` built from a ground-truth pair; `x_res = x_lq − x_hq`.
    pub fn from_pair(x_hq: ArrayD<f64>, x_lq: ArrayD<f64>) -> Result<Self> {
        same_shape("hq/lq pair", &x_hq, &x_lq)?;
        let x_res = &x_lq - &x_hq;
        Ok(Self {
            x_t: x_hq,
            t: 0,
            x_lq,
            x_res,
        })
    }
}

/// One forward step `x_t = x_{t−1} + α_t x_res + β_t ε − δ_t x_lq`.
pub fn forward_step(state: &DiffusionState, eps: &ArrayD<f64>, schedule: &DiffusionSchedule) -> Result<DiffusionState> {
    let t = state.t + 1;
    schedule.check_step(t)?;
    same_shape("state/eps", &state.x_t, eps)?;
    same_shape("state/x_lq", &state.x_t, &state.x_lq)?;
    same_shape("state/x_res", &state.x_t, &state.x_res)?;
    let (a, b, d) = (schedule.alpha[t], schedule.beta[t], schedule.delta[t]);
    let mut x_t = state.x_t.clone();
    Zip::from(&mut x_t)
        .and(&state.x_res)
        .and(eps)
        .and(&state.x_lq)
        .for_each(|x, &r, &e, &l| *x = *x + a * r + b * e - d * l);
    Ok(DiffusionState {
        x_t,
        t,
        x_lq: state.x_lq.clone(),
        x_res: state.x_res.clone(),
    })
}

/// Closed form `x_t = x0 + ᾱ_t x_res + β̄_t ε − δ̄_t x_lq`.
pub fn forward_cumulative(
    x0: &ArrayD<f64>,
    x_res: &ArrayD<f64>,
    x_lq: &ArrayD<f64>,
    eps: &ArrayD<f64>,
    t: usize,
    schedule: &DiffusionSchedule,
) -> Result<ArrayD<f64>> {
    if t > schedule.steps {
        return Err(Error::arg(format!("step {t} outside 0..={}", schedule.steps)));
    }
    same_shape("x0/x_res", x0, x_res)?;
    same_shape("x0/x_lq", x0, x_lq)?;
    same_shape("x0/eps", x0, eps)?;
    let (a, b, d) = (schedule.alpha_bar[t], schedule.beta_bar[t], schedule.delta_bar[t]);
    let mut out = x0.clone();
    Zip::from(&mut out)
        .and(x_res)
        .and(eps)
        .and(x_lq)
        .for_each(|x, &r, &e, &l| *x = *x + a * r + b * e - d * l);
    Ok(out)
}

/// Predicted residual and noise for a state.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorOutput {
    pub res_pred: ArrayD<f64>,
    pub eps_pred: ArrayD<f64>,
}

/// Anything that can estimate `(x_res, ε)` from `(x_t, t)`.
pub trait Predictor {
    fn predict(&self, x_t: &ArrayD<f64>, t: usize) -> Result<PredictorOutput>;
}

impl<F> Predictor for F
where
    F: Fn(&ArrayD<f64>, usize) -> Result<PredictorOutput>,
{
    fn predict(&self, x_t: &ArrayD<f64>, t: usize) -> Result<PredictorOutput> {
        self(x_t, t)
    }
}

/// Predicts zero residual and zero noise everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl Predictor for ZeroPredictor {
    fn predict(&self, x_t: &ArrayD<f64>, _t: usize) -> Result<PredictorOutput> {
        Ok(PredictorOutput {
            res_pred: ArrayD::zeros(x_t.raw_dim()),
            eps_pred: ArrayD::zeros(x_t.raw_dim()),
        })
    }
}

/// Inverts the cumulative forward form given the true clean and LQ fields,
/// so that sampling with it must reproduce `x0`.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    x0: ArrayD<f64>,
    x_lq: ArrayD<f64>,
    res: ArrayD<f64>,
    schedule: DiffusionSchedule,
}

impl OraclePredictor {
    pub fn new(x0: ArrayD<f64>, x_lq: ArrayD<f64>, schedule: &DiffusionSchedule) -> Result<Self> {
        same_shape("x0/x_lq", &x0, &x_lq)?;
        let res = &x_lq - &x0;
        Ok(Self {
            x0,
            x_lq,
            res,
            schedule: schedule.clone(),
        })
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, x_t: &ArrayD<f64>, t: usize) -> Result<PredictorOutput> {
        self.schedule.check_step(t)?;
        same_shape("oracle/x_t", &self.x0, x_t)?;
        let s = &self.schedule;
        let (a, b, d) = (s.alpha_bar[t], s.beta_bar[t], s.delta_bar[t]);
        if b == 0.0 {
            return Err(Error::Schedule(format!("beta_bar vanishes at t = {t}")));
        }
        let mut eps = x_t.clone();
        Zip::from(&mut eps)
            .and(&self.x0)
            .and(&self.res)
            .and(&self.x_lq)
            .for_each(|e, &x0, &r, &l| *e = (*e - x0 - a * r + d * l) / b);
        Ok(PredictorOutput {
            res_pred: self.res.clone(),
            eps_pred: eps,
        })
    }
}

/// Deterministic update `x_{t−1} = x_t − α_t res − (β_t²/β̄_t) ε + δ_t x_lq`.
pub fn reverse_step(
    x_t: &ArrayD<f64>,
    x_lq: &ArrayD<f64>,
    pred: &PredictorOutput,
    t: usize,
    schedule: &DiffusionSchedule,
) -> Result<ArrayD<f64>> {
    schedule.check_step(t)?;
    same_shape("x_t/x_lq", x_t, x_lq)?;
    same_shape("x_t/res_pred", x_t, &pred.res_pred)?;
    same_shape("x_t/eps_pred", x_t, &pred.eps_pred)?;
    let s = schedule;
    let (a, d) = (s.alpha[t], s.delta[t]);
    let c = s.beta[t] * s.beta[t] / s.beta_bar[t];
    let mut out = x_t.clone();
    Zip::from(&mut out)
        .and(&pred.res_pred)
        .and(&pred.eps_pred)
        .and(x_lq)
        .for_each(|x, &r, &e, &l| *x = *x - a * r - c * e + d * l);
    Ok(out)
}

/// Runs the reverse process from `x_T` down to `x_0`; the trajectory holds
/// `T + 1` fields ordered `[x_T, …, x_0]`.
pub fn sample(
    x_big_t: &ArrayD<f64>,
    x_lq: &ArrayD<f64>,
    predictor: &dyn Predictor,
    schedule: &DiffusionSchedule,
) -> Result<Vec<ArrayD<f64>>> {
    run_sampler(x_big_t, x_lq, predictor, schedule, None::<&mut rand_chacha::ChaCha8Rng>)
}

/// Like [`sample`] but adds posterior noise `sqrt(σ_t) z` at every step.
/// Diagnostic only; the reference sampler is deterministic.
pub fn sample_stochastic<R: Rng>(
    x_big_t: &ArrayD<f64>,
    x_lq: &ArrayD<f64>,
    predictor: &dyn Predictor,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<Vec<ArrayD<f64>>> {
    run_sampler(x_big_t, x_lq, predictor, schedule, Some(rng))
}

fn run_sampler<R: Rng>(
    x_big_t: &ArrayD<f64>,
    x_lq: &ArrayD<f64>,
    predictor: &dyn Predictor,
    schedule: &DiffusionSchedule,
    mut rng: Option<&mut R>,
) -> Result<Vec<ArrayD<f64>>> {
    same_shape("x_T/x_lq", x_big_t, x_lq)?;
    let mut trajectory = Vec::with_capacity(schedule.steps + 1);
    trajectory.push(x_big_t.clone());
    for t in (1..=schedule.steps).rev() {
        let x_t = trajectory.last().expect("trajectory starts non-empty");
        let pred = predictor.predict(x_t, t)?;
        let mut next = reverse_step(x_t, x_lq, &pred, t, schedule)?;
        if let Some(rng) = rng.as_deref_mut() {
            let sd = posterior_variance(t, schedule)?.sqrt();
            next.mapv_inplace(|v| v + sd * rng.sample::<f64, _>(StandardNormal));
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value at step {t}")));
        }
        trajectory.push(next);
    }
    Ok(trajectory)
}

/// Random valid schedule for property sweeps: random positive increments for
/// `ᾱ` and `β̄²`, and `δ̄` increments kept away from `α_t` in restoration.
pub fn random_schedule<R: Rng>(rng: &mut R, steps: usize, stage: Stage) -> Result<DiffusionSchedule> {
    let mut alpha_bar = vec![0.0; steps + 1];
    let mut beta_bar = vec![0.0; steps + 1];
    let mut delta_bar = vec![0.0; steps + 1];
    let mut var = 0.0;
    for t in 1..=steps {
        let a = rng.gen_range(0.01..1.0) / steps as f64;
        var += rng.gen_range(0.001..0.1) / steps as f64;
        alpha_bar[t] = alpha_bar[t - 1] + if stage == Stage::Generation { 0.0 } else { a };
        beta_bar[t] = var.sqrt();
        delta_bar[t] = delta_bar[t - 1]
            + match stage {
                Stage::Restoration => a * rng.gen_range(0.05..0.9),
                _ => 0.0,
            };
    }
    DiffusionSchedule::from_cumulative(stage, alpha_bar, beta_bar, delta_bar)
}

/// Worst oracle reconstruction error over a batch of random schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub steps: usize,
    pub stage: Stage,
    pub trials: usize,
    /// Max over trials of `|x̂_0 − x_0|∞ / (1 + |x_0|∞)`.
    pub max_error: f64,
}

/// Relative reconstruction error of one oracle run: `x_T` is produced by the
/// cumulative forward form and sampled back down to `x_0`.
pub fn oracle_error<R: Rng>(rng: &mut R, schedule: &DiffusionSchedule, shape: &[usize]) -> Result<f64> {
    let field = |rng: &mut R| ArrayD::from_shape_fn(ndarray::IxDyn(shape), |_| rng.gen_range(-2.0..2.0));
    let x0 = field(rng);
    let x_lq = field(rng);
    let eps = field(rng);
    let x_res = &x_lq - &x0;
    let x_big_t = forward_cumulative(&x0, &x_res, &x_lq, &eps, schedule.steps, schedule)?;
    let oracle = OraclePredictor::new(x0.clone(), x_lq.clone(), schedule)?;
    let trajectory = sample(&x_big_t, &x_lq, &oracle, schedule)?;
    let got = trajectory.last().expect("trajectory has T + 1 entries");
    let err = got.iter().zip(&x0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = 1.0 + x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(err / scale)
}

/// Runs `trials` oracle reconstructions on 8×8 fields. The first trial uses
/// the default schedule, the rest [`random_schedule`]s.
pub fn oracle_sweep(steps: usize, stage: Stage, trials: usize, seed: u64) -> Result<OracleRecord> {
    if trials == 0 {
        return Err(Error::arg("at least one trial is required"));
    }
    let mut rng = crate::degrade::seeded_rng(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let schedule = if trial == 0 {
            make_schedule(steps, stage, ScheduleParams::default())?
        } else {
            random_schedule(&mut rng, steps, stage)?
        };
        worst = worst.max(oracle_error(&mut rng, &schedule, &[8, 8])?);
    }
    Ok(OracleRecord {
        steps,
        stage,
        trials,
        max_error: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr0, Array, IxDyn};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> ArrayD<f64> {
        arr0(v).into_dyn()
    }

    fn random_field<R: Rng>(rng: &mut R, shape: &[usize]) -> ArrayD<f64> {
        Array::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn schedule_examples() {
        let s = make_schedule(4, Stage::Bridging, ScheduleParams::default()).unwrap();
        for t in 1..=4 {
            assert!((s.alpha()[t] - 0.25).abs() < 1e-15);
        }
        let expected = [0.0, 0.05, 0.1 * 0.5f64.sqrt(), 0.1 * 0.75f64.sqrt(), 0.1];
        for (a, b) in s.beta_bar().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.beta_bar()[2] - 0.0707).abs() < 1e-4);
        assert!((s.beta_bar()[3] - 0.0866).abs() < 1e-4);

        let g = make_schedule(7, Stage::Generation, ScheduleParams { kappa: 0.3, eta: 0.5, shape: 2.0 }).unwrap();
        assert!(g.alpha().iter().chain(g.delta()).all(|&v| v == 0.0));
        let b = make_schedule(7, Stage::Bridging, ScheduleParams { kappa: 0.3, eta: 0.5, shape: 2.0 }).unwrap();
        assert!(b.delta().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn schedule_errors() {
        let p = ScheduleParams::default();
        assert!(make_schedule(0, Stage::Bridging, p).is_err());
        let eta1 = ScheduleParams { eta: 1.0, ..p };
        assert!(matches!(make_schedule(5, Stage::Restoration, eta1), Err(Error::Schedule(_))));
        assert!(make_schedule(5, Stage::Bridging, eta1).is_ok());
        assert!(make_schedule(5, Stage::Bridging, ScheduleParams { kappa: 0.0, ..p }).is_err());
        assert!(make_schedule(5, Stage::Bridging, ScheduleParams { shape: -1.0, ..p }).is_err());
        let flat = DiffusionSchedule::from_cumulative(Stage::Bridging, vec![0.0, 0.5, 1.0], vec![0.0, 0.1, 0.1], vec![0.0; 3]);
        assert!(flat.is_err());
        let gen_with_alpha = DiffusionSchedule::from_cumulative(Stage::Generation, vec![0.0, 0.5, 1.0], vec![0.0, 0.1, 0.2], vec![0.0; 3]);
        assert!(gen_with_alpha.is_err());
    }

    #[test]
    fn posterior_variance_examples() {
        let s = make_schedule(2, Stage::Bridging, ScheduleParams::default()).unwrap();
        assert_eq!(posterior_variance(1, &s).unwrap(), 0.0);
        assert!((posterior_variance(2, &s).unwrap() - 0.0025).abs() < 1e-15);
        assert!(posterior_variance(0, &s).is_err());
        assert!(posterior_variance(3, &s).is_err());
    }

    #[test]
    fn forward_step_examples() {
        let s = DiffusionSchedule::from_cumulative(Stage::Restoration, vec![0.0, 0.5], vec![0.0, 0.1], vec![0.0, 0.2]).unwrap();
        let state = DiffusionState { x_t: scalar(1.0), t: 0, x_lq: scalar(3.0), x_res: scalar(2.0) };
        let next = forward_step(&state, &scalar(1.0), &s).unwrap();
        assert!((next.x_t.sum() - 1.5).abs() < 1e-15);
        assert_eq!(next.t, 1);
        assert!(forward_step(&next, &scalar(1.0), &s).is_err());

        let g = make_schedule(3, Stage::Generation, ScheduleParams::default()).unwrap();
        let state = DiffusionState::from_pair(scalar(0.7), scalar(1.9)).unwrap();
        let next = forward_step(&state, &scalar(0.0), &g).unwrap();
        assert_eq!(next.x_t, state.x_t);

        let bad = Array::zeros(IxDyn(&[2]));
        assert!(matches!(forward_step(&state, &bad, &g), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn forward_cumulative_examples() {
        let s = make_schedule(5, Stage::Bridging, ScheduleParams::default()).unwrap();
        let (x0, lq) = (scalar(0.25), scalar(0.75));
        let res = &lq - &x0;
        let eps = scalar(0.4);
        assert_eq!(forward_cumulative(&x0, &res, &lq, &eps, 0, &s).unwrap(), x0);
        let end = forward_cumulative(&x0, &res, &lq, &scalar(0.0), 5, &s).unwrap();
        assert!((end.sum() - 0.75).abs() < 1e-15);
        assert!(forward_cumulative(&x0, &res, &lq, &eps, 6, &s).is_err());
    }

    #[test]
    fn reverse_step_examples() {
        let g = make_schedule(4, Stage::Generation, ScheduleParams::default()).unwrap();
        let pred = PredictorOutput { res_pred: scalar(5.0), eps_pred: scalar(0.3) };
        let out = reverse_step(&scalar(1.0), &scalar(9.0), &pred, 3, &g).unwrap();
        let c = g.beta()[3].powi(2) / g.beta_bar()[3];
        assert_eq!(out.sum(), 1.0 - c * 0.3);

        let b = make_schedule(4, Stage::Bridging, ScheduleParams::default()).unwrap();
        let zero = ZeroPredictor.predict(&scalar(0.0), 1).unwrap();
        assert_eq!(reverse_step(&scalar(2.5), &scalar(1.0), &zero, 2, &b).unwrap(), scalar(2.5));
        assert!(reverse_step(&scalar(2.5), &scalar(1.0), &zero, 0, &b).is_err());
    }

    #[test]
    fn single_step_oracle_recovers_x0() {
        let s = make_schedule(3, Stage::Restoration, ScheduleParams::default()).unwrap();
        let (x0, lq, eps) = (scalar(0.2), scalar(-0.9), scalar(1.3));
        let x1 = forward_cumulative(&x0, &(&lq - &x0), &lq, &eps, 1, &s).unwrap();
        let oracle = OraclePredictor::new(x0.clone(), lq.clone(), &s).unwrap();
        let pred = oracle.predict(&x1, 1).unwrap();
        assert!((pred.eps_pred.sum() - 1.3).abs() < 1e-12);
        let back = reverse_step(&x1, &lq, &pred, 1, &s).unwrap();
        assert!((back.sum() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_predictor_bridging_trajectory_is_constant() {
        let s = make_schedule(6, Stage::Bridging, ScheduleParams::default()).unwrap();
        let x = Array::from_elem(IxDyn(&[2, 3]), 0.4);
        let traj = sample(&x, &x, &ZeroPredictor, &s).unwrap();
        assert_eq!(traj.len(), 7);
        assert!(traj.iter().all(|f| f == &x));
    }

    #[test]
    fn oracle_sweep_defaults() {
        for stage in Stage::ALL {
            let rec = oracle_sweep(16, stage, 5, 3).unwrap();
            assert!(rec.max_error < 1e-9);
        }
        assert!(oracle_sweep(4, Stage::Bridging, 0, 0).is_err());
    }

    #[test]
    fn stochastic_sampler_is_seeded() {
        let s = make_schedule(5, Stage::Restoration, ScheduleParams::default()).unwrap();
        let x = scalar(0.1);
        let run = |seed| sample_stochastic(&x, &x, &ZeroPredictor, &s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let s = make_schedule(5, Stage::Restoration, ScheduleParams::default()).unwrap();
        let back = DiffusionSchedule::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back.stage(), s.stage());
        assert_eq!(back.beta_bar(), s.beta_bar());
        let tampered = s.to_json().unwrap().replace("\"restoration\"", "\"generation\"");
        assert!(DiffusionSchedule::from_json(&tampered).is_err());
    }

    #[test]
    fn stage_names() {
        assert_eq!("rft".parse::<Stage>().unwrap(), Stage::Restoration);
        assert_eq!(serde_json::from_str::<Stage>("\"rft\"").unwrap(), Stage::Restoration);
        assert!("denoise".parse::<Stage>().is_err());
    }

    proptest! {
        #[test]
        fn prefix_sums_hold(steps in 1usize..64, kappa in 0.01f64..2.0, eta in 0.0f64..0.95, shape in 0.3f64..3.0) {
            for stage in Stage::ALL {
                let s = make_schedule(steps, stage, ScheduleParams { kappa, eta, shape }).unwrap();
                let (mut a, mut d, mut b2) = (0.0, 0.0, 0.0);
                for t in 1..=steps {
                    a += s.alpha()[t];
                    d += s.delta()[t];
                    b2 += s.beta()[t] * s.beta()[t];
                    prop_assert!((a - s.alpha_bar()[t]).abs() < 1e-12);
                    prop_assert!((d - s.delta_bar()[t]).abs() < 1e-12);
                    prop_assert!((b2.sqrt() - s.beta_bar()[t]).abs() < 1e-12);
                    prop_assert!(s.beta_bar()[t] > s.beta_bar()[t - 1]);
                    prop_assert!(posterior_variance(t, &s).unwrap() >= 0.0);
                }
            }
        }

        #[test]
        fn oracle_reconstructs(seed in any::<u64>(), steps in 1usize..64, stage_idx in 0usize..3, grid in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_schedule(&mut rng, steps, Stage::ALL[stage_idx]).unwrap();
            let shape: &[usize] = if grid { &[8, 8] } else { &[] };
            let err = oracle_error(&mut rng, &s, shape).unwrap();
            prop_assert!(err < 1e-9, "error {}", err);
        }

        #[test]
        fn noise_free_forward_matches_cumulative(seed in any::<u64>(), steps in 1usize..40, stage_idx in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_schedule(&mut rng, steps, Stage::ALL[stage_idx]).unwrap();
            let x0 = random_field(&mut rng, &[3]);
            let lq = random_field(&mut rng, &[3]);
            let zero = ArrayD::zeros(IxDyn(&[3]));
            let mut state = DiffusionState::from_pair(x0.clone(), lq.clone()).unwrap();
            for t in 1..=steps {
                state = forward_step(&state, &zero, &s).unwrap();
                let closed = forward_cumulative(&x0, &state.x_res, &lq, &zero, t, &s).unwrap();
                let err = (&state.x_t - &closed).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                prop_assert!(err < 1e-12, "t={} err={}", t, err);
            }
        }
    }
}
