//! The `degscope` command line.
//!
//! Exit codes: 0 on success, 1 when a numerical check exceeds its threshold,
//! 2 on usage, configuration, I/O or any other error.
//!
//! Settings resolve in the order flag, `DEGSCOPE_*` environment variable,
//! `--config` JSON file, built-in default. Report payloads never carry
//! timestamps; when `--out` is given a `run.log` sidecar records the
//! invocation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::FeatureMethod;
use crate::bench::{self, BenchSummary, DeskConfig, FeatureConfig, Sample};
use crate::classify::{EvalOptions, Protocol, Task, DEFAULT_K};
use crate::corpus::{
    center_crop, load_image, quantize, CorpusManifest, GrayImage, ManifestEntry, DEFAULT_CROP, DEFAULT_LEVELS,
};
use crate::degrade::{parse_spec_list, substream_seed};
use crate::diffusion::{self, make_schedule, OracleRecord, ScheduleParams, Stage};
use crate::glcm::{mas_glcm, AngleScaleConfig};
use crate::losses::gradcheck::{self, GradCheckRecord, LossId, DEFAULT_EPSILON};
use crate::{Error, Result};

/// Largest reconstruction error `diffuse-check` accepts.
pub const DIFFUSE_THRESHOLD: f64 = 1e-9;
/// Largest relative gradient error `grad-check` accepts.
pub const GRAD_THRESHOLD: f64 = 1e-5;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "degscope", version, about = "Degradation fingerprints and residual diffusion checks")]
pub struct Cli {
    /// JSON file supplying defaults for any setting.
    #[arg(long, global = true, env = "DEGSCOPE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, env = "DEGSCOPE_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "DEGSCOPE_JOBS")]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "DEGSCOPE_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the MAS-GLCM of one image and write it as CSV and JSON.
    Fingerprint(FingerprintArgs),
    /// Degrade clean images and write a labelled corpus with a manifest.
    Synth(SynthArgs),
    /// Run the degradation classification benchmark.
    Bench(BenchArgs),
    /// Verify oracle reconstruction of the reverse sampler.
    DiffuseCheck(DiffuseArgs),
    /// Compare analytic loss gradients with central differences.
    GradCheck(GradArgs),
    /// Print a diffusion schedule as JSON.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Args)]
pub struct FingerprintArgs {
    pub image: PathBuf,
    /// Angle/scale preset: full, nonnegative or axis.
    #[arg(long)]
    pub preset: Option<String>,
    /// Gray levels after quantization.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Center-crop to this size first.
    #[arg(long)]
    pub crop: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of clean PNG/PGM/PPM images.
    #[arg(long, conflicts_with = "fixtures", required_unless_present = "fixtures")]
    pub clean_dir: Option<PathBuf>,
    /// Generate this many synthetic clean scenes instead of reading a directory.
    #[arg(long)]
    pub fixtures: Option<usize>,
    /// Degradations, e.g. "gaussian:15,25 haze:all chain:1..8".
    #[arg(long)]
    pub specs: String,
    /// Center-crop size.
    #[arg(long)]
    pub crop: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchPreset {
    /// Synthetic scenes, five types at default levels plus the Gaussian levels.
    Table1,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Corpus manifest written by `synth`.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<BenchPreset>,
    /// Comma-separated methods (raw, sobel, laplace, fourier, mas-glcm).
    #[arg(long)]
    pub methods: Option<String>,
    /// type, level or order (manifest runs only).
    #[arg(long)]
    pub task: Option<String>,
    /// Neighbours for the k-NN classifier.
    #[arg(short, long)]
    pub k: Option<usize>,
    /// loo or split:<train fraction>.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Z-score features with training statistics.
    #[arg(long)]
    pub standardize: bool,
    /// Clean scenes for the preset.
    #[arg(long)]
    pub images: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiffuseArgs {
    /// Comma-separated step counts.
    #[arg(long)]
    pub steps: Option<String>,
    /// Comma-separated stages.
    #[arg(long)]
    pub stages: Option<String>,
    /// Random instances per (steps, stage) cell.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradArgs {
    /// Comma-separated losses (gen, bridge, deg-cls, bdg, rft, fcnl).
    #[arg(long)]
    pub losses: Option<String>,
    /// Random instances per loss.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Central-difference step.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// generation, bridging or restoration.
    #[arg(long, default_value = "restoration")]
    pub stage: String,
    /// Final noise scale.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Final LQ weight (restoration only).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Exponent of the progress curve.
    #[arg(long)]
    pub shape: Option<f64>,
}

/// Settings that may come from a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub glcm_preset: Option<String>,
    pub levels: Option<usize>,
    pub crop: Option<usize>,
    pub k: Option<usize>,
    pub protocol: Option<String>,
    pub standardize: Option<bool>,
    pub methods: Option<String>,
    pub task: Option<String>,
    pub images: Option<usize>,
    pub steps: Option<String>,
    pub stages: Option<String>,
    pub trials: Option<usize>,
    pub epsilon: Option<f64>,
    pub kappa: Option<f64>,
    pub eta: Option<f64>,
    pub shape: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Outcome of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CheckFailed,
}

/// Per-combination oracle errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffuseReport {
    pub seed: u64,
    pub threshold: f64,
    pub passed: bool,
    pub records: Vec<OracleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub seed: u64,
    pub threshold: f64,
    pub passed: bool,
    pub records: Vec<GradCheckRecord>,
}

#[derive(Debug, Serialize)]
struct FingerprintMeta<'a> {
    source: String,
    width: usize,
    height: usize,
    #[serde(flatten)]
    glcm: &'a crate::glcm::MasGlcm,
}

struct Context {
    seed: u64,
    out: Option<PathBuf>,
    config: RunConfig,
}

impl Context {
    fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs --out".into()))
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = &self.out {
            write_file(&dir.join(name), contents)?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty())
}

fn parse_protocol(s: &str, seed: u64) -> Result<Protocol> {
    match s.trim() {
        "loo" | "leave-one-out" => Ok(Protocol::LeaveOneOut),
        other => {
            let frac = other
                .strip_prefix("split:")
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| Error::arg(format!("protocol must be 'loo' or 'split:<fraction>', got {other:?}")))?;
            if !(frac > 0.0 && frac < 1.0) {
                return Err(Error::arg(format!("train fraction {frac} outside (0, 1)")));
            }
            Ok(Protocol::Split {
                train_fraction: frac,
                seed,
            })
        }
    }
}

fn parse_methods(s: Option<&str>) -> Result<Vec<FeatureMethod>> {
    match s {
        None => Ok(FeatureMethod::ALL.to_vec()),
        Some(s) => split_list(s).map(str::parse).collect(),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code. Messages go to stderr.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::CheckFailed) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<Outcome> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| config.out.clone()),
        config,
    };
    let jobs = cli.jobs.or(ctx.config.jobs);
    if jobs == Some(0) {
        return Err(Error::arg("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| dispatch(&cli.command, &ctx))?;
    if let Some(dir) = &ctx.out {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let line = format!(
            "unix_time={stamp} command={} seed={} outcome={outcome:?}\n",
            command_name(&cli.command),
            ctx.seed
        );
        write_file(&dir.join("run.log"), &line)?;
    }
    Ok(outcome)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Fingerprint(_) => "fingerprint",
        Command::Synth(_) => "synth",
        Command::Bench(_) => "bench",
        Command::DiffuseCheck(_) => "diffuse-check",
        Command::GradCheck(_) => "grad-check",
        Command::Schedule(_) => "schedule",
    }
}

fn dispatch(command: &Command, ctx: &Context) -> Result<Outcome> {
    match command {
        Command::Fingerprint(a) => fingerprint(a, ctx),
        Command::Synth(a) => synth(a, ctx),
        Command::Bench(a) => bench_cmd(a, ctx),
        Command::DiffuseCheck(a) => diffuse_check(a, ctx),
        Command::GradCheck(a) => grad_check(a, ctx),
        Command::Schedule(a) => schedule(a, ctx),
    }
}

fn glcm_config(preset: Option<&str>, ctx: &Context) -> Result<AngleScaleConfig> {
    AngleScaleConfig::preset(preset.or(ctx.config.glcm_preset.as_deref()).unwrap_or("full"))
}

fn fingerprint(a: &FingerprintArgs, ctx: &Context) -> Result<Outcome> {
    let mut img = load_image(&a.image)?;
    if let Some(size) = a.crop.or(ctx.config.crop) {
        img = center_crop(&img, size)?;
    }
    let levels = a.levels.or(ctx.config.levels).unwrap_or(DEFAULT_LEVELS);
    let glcm = mas_glcm(&quantize(&img, levels)?, &glcm_config(a.preset.as_deref(), ctx)?)?;
    let stem = a
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let meta = FingerprintMeta {
        source: a.image.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        width: img.width(),
        height: img.height(),
        glcm: &glcm,
    };
    let dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("."));
    write_file(&dir.join(format!("{stem}.mas-glcm.csv")), &glcm.to_csv())?;
    write_file(&dir.join(format!("{stem}.mas-glcm.json")), &json(&meta)?)?;
    Ok(Outcome::Success)
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}

/// Clean images from a directory, sorted by file name.
fn read_clean_dir(dir: &Path) -> Result<Vec<(String, GrayImage)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::arg(format!("no PNG/PNM images in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            load_image(p).map(|img| (name, img))
        })
        .collect()
}

fn synth(a: &SynthArgs, ctx: &Context) -> Result<Outcome> {
    let out = ctx.out_dir()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let crop = a.crop.or(ctx.config.crop).unwrap_or(DEFAULT_CROP);
    let patterns = parse_spec_list(&a.specs)?;
    let clean = match (&a.clean_dir, a.fixtures) {
        (Some(dir), _) => read_clean_dir(dir)?,
        (None, Some(0)) => return Err(Error::arg("--fixtures must be at least 1")),
        (None, Some(n)) => bench::desk_clean_images(&DeskConfig {
            images: n,
            size: crop,
            seed: ctx.seed,
            ..DeskConfig::default()
        }),
        (None, None) => return Err(Error::arg("give --clean-dir or --fixtures")),
    };
    let clean = bench::crop_all(clean, crop)?;
    let specs: Vec<_> = patterns
        .iter()
        .flat_map(|p| p.levels.iter().map(move |&l| (p.kind, l, p.seed)))
        .collect();
    let samples = bench::synthesize(&clean, &specs, ctx.seed)?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in &samples {
        let file = format!("{}.png", s.id);
        let entry = ManifestEntry {
            id: s.id.clone(),
            path: file.clone(),
            label: s.label,
            seed: s.seed,
        };
        s.image.save_png(out.join(&file))?;
        write_file(&out.join(format!("{}.json", s.id)), &json(&entry)?)?;
        entries.push(entry);
    }
    let manifest = CorpusManifest {
        crop_size: crop,
        entries,
    };
    manifest.save(out.join("manifest.json"))?;
    Ok(Outcome::Success)
}

fn load_manifest_samples(path: &Path) -> Result<Vec<Sample>> {
    let manifest = CorpusManifest::load(path)?;
    if manifest.entries.is_empty() {
        return Err(Error::Manifest("manifest lists no samples".into()));
    }
    manifest
        .entries
        .iter()
        .map(|e| {
            Ok(Sample {
                id: e.id.clone(),
                image: load_image(CorpusManifest::resolve(path, e))?,
                label: e.label,
                seed: e.seed,
            })
        })
        .collect()
}

fn bench_cmd(a: &BenchArgs, ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let methods = parse_methods(a.methods.as_deref().or(cfg.methods.as_deref()))?;
    let k = a.k.or(cfg.k).unwrap_or(DEFAULT_K);
    let standardize = a.standardize || cfg.standardize.unwrap_or(false);
    let features = FeatureConfig {
        levels: cfg.levels.unwrap_or(DEFAULT_LEVELS),
        glcm: glcm_config(None, ctx)?,
        ..FeatureConfig::default()
    };
    let summary = match (a.preset, &a.manifest) {
        (Some(BenchPreset::Table1), _) => {
            let desk = DeskConfig {
                images: a.images.or(cfg.images).unwrap_or(DeskConfig::default().images),
                seed: ctx.seed,
                k,
                standardize,
                features,
                ..DeskConfig::default()
            };
            bench::run_desk(&desk, &methods)?
        }
        (None, Some(path)) => {
            let samples = load_manifest_samples(path)?;
            let task: Task = a.task.as_deref().or(cfg.task.as_deref()).unwrap_or("type").parse()?;
            let protocol = parse_protocol(a.protocol.as_deref().or(cfg.protocol.as_deref()).unwrap_or("loo"), ctx.seed)?;
            let opts = EvalOptions { k, protocol, standardize };
            BenchSummary::from_reports(None, bench::run_task(&samples, &methods, task, &features, opts)?)
        }
        (None, None) => return Err(Error::arg("give --manifest or --preset")),
    };
    let text = summary.to_text();
    print!("{text}");
    ctx.write("bench.json", &json(&summary)?)?;
    ctx.write("bench.csv", &summary.to_csv())?;
    ctx.write("bench.txt", &text)?;
    Ok(Outcome::Success)
}

/// Runs the oracle reconstruction sweep over every (steps, stage) pair.
pub fn diffuse_report(steps: &[usize], stages: &[Stage], trials: usize, seed: u64) -> Result<DiffuseReport> {
    let mut records = Vec::with_capacity(steps.len() * stages.len());
    for (i, &t) in steps.iter().enumerate() {
        for (j, &stage) in stages.iter().enumerate() {
            let sub = substream_seed(substream_seed(seed, i as u64), j as u64);
            records.push(diffusion::oracle_sweep(t, stage, trials, sub)?);
        }
    }
    let passed = records.iter().all(|r| r.max_error <= DIFFUSE_THRESHOLD);
    Ok(DiffuseReport {
        seed,
        threshold: DIFFUSE_THRESHOLD,
        passed,
        records,
    })
}

fn diffuse_check(a: &DiffuseArgs, ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let steps: Vec<usize> = split_list(a.steps.as_deref().or(cfg.steps.as_deref()).unwrap_or("1,4,16,64"))
        .map(|s| s.parse::<usize>().map_err(|_| Error::arg(format!("bad step count {s:?}"))))
        .collect::<Result<_>>()?;
    let stages: Vec<Stage> = match a.stages.as_deref().or(cfg.stages.as_deref()) {
        Some(s) => split_list(s).map(str::parse).collect::<Result<_>>()?,
        None => Stage::ALL.to_vec(),
    };
    if steps.is_empty() || stages.is_empty() {
        return Err(Error::arg("empty step or stage list"));
    }
    let report = diffuse_report(&steps, &stages, a.trials.or(cfg.trials).unwrap_or(20), ctx.seed)?;
    let body = json(&report)?;
    print!("{body}");
    ctx.write("diffuse-check.json", &body)?;
    Ok(if report.passed { Outcome::Success } else { Outcome::CheckFailed })
}

/// Runs the gradient check for each loss with its own seeded stream.
pub fn grad_report(losses: &[LossId], trials: usize, epsilon: f64, seed: u64) -> Result<GradReport> {
    let records = losses
        .iter()
        .map(|&id| {
            let index = LossId::ALL.iter().position(|&x| x == id).expect("listed loss") as u64;
            let mut rng = crate::degrade::seeded_rng(substream_seed(seed, index));
            gradcheck::sweep(id, trials, epsilon, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = records.iter().all(|r| r.max_relative_error <= GRAD_THRESHOLD);
    Ok(GradReport {
        seed,
        threshold: GRAD_THRESHOLD,
        passed,
        records,
    })
}

fn grad_check(a: &GradArgs, ctx: &Context) -> Result<Outcome> {
    let losses: Vec<LossId> = match &a.losses {
        Some(s) => split_list(s).map(str::parse).collect::<Result<_>>()?,
        None => LossId::ALL.to_vec(),
    };
    if losses.is_empty() {
        return Err(Error::arg("empty loss list"));
    }
    let trials = a.trials.or(ctx.config.trials).unwrap_or(100);
    if trials == 0 {
        return Err(Error::arg("at least one trial is required"));
    }
    let epsilon = a.epsilon.or(ctx.config.epsilon).unwrap_or(DEFAULT_EPSILON);
    let report = grad_report(&losses, trials, epsilon, ctx.seed)?;
    let body = json(&report)?;
    print!("{body}");
    ctx.write("grad-check.json", &body)?;
    Ok(if report.passed { Outcome::Success } else { Outcome::CheckFailed })
}

fn schedule(a: &ScheduleArgs, ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let d = ScheduleParams::default();
    let params = ScheduleParams {
        kappa: a.kappa.or(cfg.kappa).unwrap_or(d.kappa),
        eta: a.eta.or(cfg.eta).unwrap_or(d.eta),
        shape: a.shape.or(cfg.shape).unwrap_or(d.shape),
    };
    let s = make_schedule(a.steps, a.stage.parse()?, params)?;
    let mut body = s.to_json()?;
    body.push('\n');
    print!("{body}");
    ctx.write("schedule.json", &body)?;
    Ok(Outcome::Success)
}
