//! C ABI over the degscope library.
//!
//! Conventions:
//! - every fallible function returns a [`DsStatus`]; `DS_STATUS_OK` is 0;
//! - images and schedules are opaque handles created by `ds_*_new`/`ds_*_load`
//!   and released with the matching `ds_*_free` (passing NULL is allowed);
//! - fields and feature batches are flat row-major `double` buffers;
//! - after a failure, [`ds_last_error_message`] returns a description for the
//!   calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use degscope::corpus::{self, GrayImage};
use degscope::degrade::{DegradeSpec, SpecPattern};
use degscope::diffusion::{self, DiffusionSchedule, OraclePredictor, PredictorOutput, ScheduleParams, Stage};
use degscope::glcm::{mas_glcm, AngleScaleConfig};
use degscope::losses::gradcheck::{self, LossId};
use degscope::losses::{self, FeatureBatch, FeatureSource, GenInputs, StepCoefficients};
use degscope::Error;
use ndarray::{ArrayD, IxDyn};

/// Result codes. Values 1 to 13 mirror the library error kinds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    Io = 1,
    Decode = 2,
    UnsupportedBitDepth = 3,
    InvalidImage = 4,
    DimensionMismatch = 5,
    InvalidArgument = 6,
    Config = 7,
    Schedule = 8,
    Gating = 9,
    Degenerate = 10,
    Numerical = 11,
    Manifest = 12,
    Json = 13,
    NullPointer = 100,
    InvalidUtf8 = 101,
    BufferTooSmall = 102,
    Panic = 103,
}

/// Which coefficient array [`ds_schedule_coefficients`] copies out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsCoefficient {
    Alpha = 0,
    Beta = 1,
    Delta = 2,
    AlphaBar = 3,
    BetaBar = 4,
    DeltaBar = 5,
}

/// Opaque grayscale image.
pub struct DsImage(GrayImage);

/// Opaque diffusion schedule.
pub struct DsSchedule(DiffusionSchedule);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(DsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.code() {
            1 => DsStatus::Io,
            2 => DsStatus::Decode,
            3 => DsStatus::UnsupportedBitDepth,
            4 => DsStatus::InvalidImage,
            5 => DsStatus::DimensionMismatch,
            6 => DsStatus::InvalidArgument,
            7 => DsStatus::Config,
            8 => DsStatus::Schedule,
            9 => DsStatus::Gating,
            10 => DsStatus::Degenerate,
            11 => DsStatus::Numerical,
            12 => DsStatus::Manifest,
            _ => DsStatus::Json,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> DsStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (DsStatus::Ok, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(_) => (DsStatus::Panic, "internal panic".to_string()),
    };
    LAST_ERROR.with(|cell| *cell.borrow_mut() = message);
    status
}

fn null(what: &str) -> Failure {
    Failure(DsStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn in_slice<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn out_value<T>(p: *mut T, value: T, what: &str) -> FfiResult<()> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn image<'a>(p: *const DsImage) -> FfiResult<&'a GrayImage> {
    p.as_ref().map(|h| &h.0).ok_or_else(|| null("image handle"))
}

unsafe fn schedule<'a>(p: *const DsSchedule) -> FfiResult<&'a DiffusionSchedule> {
    p.as_ref().map(|h| &h.0).ok_or_else(|| null("schedule handle"))
}

fn copy_into(dst: &mut [f64], src: &[f64]) -> FfiResult<()> {
    if dst.len() < src.len() {
        return Err(Failure(
            DsStatus::BufferTooSmall,
            format!("buffer holds {} values, {} needed", dst.len(), src.len()),
        ));
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

fn field(values: &[f64]) -> ArrayD<f64> {
    ArrayD::from_shape_vec(IxDyn(&[values.len()]), values.to_vec()).expect("1-D shape matches length")
}

fn batch(data: &[f64], rows: usize, dim: usize, source: FeatureSource) -> FfiResult<FeatureBatch> {
    Ok(FeatureBatch::new(rows, dim, data.to_vec(), source)?)
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// excluding the terminator; 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ds_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|cell| {
        let msg = cell.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a PNG or binary PNM file as a luma image.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_image_load(path: *const c_char, out: *mut *mut DsImage) -> DsStatus {
    guard(|| {
        let img = corpus::load_image(str_arg(path, "path")?)?;
        out_value(out, Box::into_raw(Box::new(DsImage(img))), "out")
    })
}

/// Builds an image from `width * height` intensities in `[0, 255]`.
///
/// # Safety
/// `data` must hold `width * height` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_image_new(width: usize, height: usize, data: *const f64, out: *mut *mut DsImage) -> DsStatus {
    guard(|| {
        let n = width.checked_mul(height).ok_or_else(|| Failure(DsStatus::InvalidImage, "size overflow".into()))?;
        let img = GrayImage::new(width, height, in_slice(data, n, "data")?.to_vec())?;
        out_value(out, Box::into_raw(Box::new(DsImage(img))), "out")
    })
}

/// Releases an image handle.
///
/// # Safety
/// `img` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_image_free(img: *mut DsImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Writes the image size.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ds_image_size(img: *const DsImage, width: *mut usize, height: *mut usize) -> DsStatus {
    guard(|| {
        let img = image(img)?;
        out_value(width, img.width(), "width")?;
        out_value(height, img.height(), "height")
    })
}

/// Copies the row-major pixels into `out` (`len >= width * height`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_image_pixels(img: *const DsImage, out: *mut f64, len: usize) -> DsStatus {
    guard(|| {
        let img = image(img)?;
        copy_into(out_slice(out, len, "out")?, img.data())
    })
}

/// Center crop to a `size × size` square.
///
/// # Safety
/// `img` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_image_center_crop(img: *const DsImage, size: usize, out: *mut *mut DsImage) -> DsStatus {
    guard(|| {
        let cropped = corpus::center_crop(image(img)?, size)?;
        out_value(out, Box::into_raw(Box::new(DsImage(cropped))), "out")
    })
}

/// Luma PSNR in dB (99 for identical images).
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_psnr(a: *const DsImage, b: *const DsImage, out: *mut f64) -> DsStatus {
    guard(|| out_value(out, corpus::psnr(image(a)?, image(b)?)?, "out"))
}

/// Applies one degradation given as a spec string with a single level,
/// e.g. `"gaussian:25"` or `"chain:5"`. A `seed=` field in the string
/// overrides `seed`.
///
/// # Safety
/// `img` must be live, `spec` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_degrade(img: *const DsImage, spec: *const c_char, seed: u64, out: *mut *mut DsImage) -> DsStatus {
    guard(|| {
        let pattern: SpecPattern = str_arg(spec, "spec")?.parse()?;
        let [level] = pattern.levels[..] else {
            return Err(Failure(DsStatus::InvalidArgument, "spec must select exactly one level".into()));
        };
        let spec = DegradeSpec::new(pattern.kind, level, pattern.seed.unwrap_or(seed))?;
        let degraded = spec.apply(image(img)?)?;
        out_value(out, Box::into_raw(Box::new(DsImage(degraded))), "out")
    })
}

/// MAS-GLCM of the image quantized to `levels` gray levels under the named
/// angle/scale preset (`"full"`, `"nonnegative"`, `"axis"`). Writes
/// `levels * levels` row-major cells.
///
/// # Safety
/// `img` must be live, `preset` NUL-terminated, `out` sized `len`.
#[no_mangle]
pub unsafe extern "C" fn ds_mas_glcm(img: *const DsImage, levels: usize, preset: *const c_char, out: *mut f64, len: usize) -> DsStatus {
    guard(|| {
        let config = AngleScaleConfig::preset(str_arg(preset, "preset")?)?;
        let q = corpus::quantize(image(img)?, levels)?;
        let m = mas_glcm(&q, &config)?;
        copy_into(out_slice(out, len, "out")?, &m.cells)
    })
}

/// Default-family schedule. `stage` is `"generation"`, `"bridging"` or
/// `"restoration"`.
///
/// # Safety
/// `stage` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_schedule_new(
    steps: usize,
    stage: *const c_char,
    kappa: f64,
    eta: f64,
    shape: f64,
    out: *mut *mut DsSchedule,
) -> DsStatus {
    guard(|| {
        let stage: Stage = str_arg(stage, "stage")?.parse()?;
        let s = diffusion::make_schedule(steps, stage, ScheduleParams { kappa, eta, shape })?;
        out_value(out, Box::into_raw(Box::new(DsSchedule(s))), "out")
    })
}

/// Releases a schedule handle.
///
/// # Safety
/// `s` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_schedule_free(s: *mut DsSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of steps `T`.
///
/// # Safety
/// `s` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_schedule_steps(s: *const DsSchedule, out: *mut usize) -> DsStatus {
    guard(|| out_value(out, schedule(s)?.steps(), "out"))
}

/// Copies one coefficient array (`T + 1` values, index 0 is the sentinel).
/// `which` is a [`DsCoefficient`] value.
///
/// # Safety
/// `s` must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_schedule_coefficients(s: *const DsSchedule, which: u32, out: *mut f64, len: usize) -> DsStatus {
    guard(|| {
        let s = schedule(s)?;
        let src = match which {
            w if w == DsCoefficient::Alpha as u32 => s.alpha(),
            w if w == DsCoefficient::Beta as u32 => s.beta(),
            w if w == DsCoefficient::Delta as u32 => s.delta(),
            w if w == DsCoefficient::AlphaBar as u32 => s.alpha_bar(),
            w if w == DsCoefficient::BetaBar as u32 => s.beta_bar(),
            w if w == DsCoefficient::DeltaBar as u32 => s.delta_bar(),
            other => return Err(Failure(DsStatus::InvalidArgument, format!("unknown coefficient {other}"))),
        };
        copy_into(out_slice(out, len, "out")?, src)
    })
}

/// Reverse posterior variance at step `t >= 1`.
///
/// # Safety
/// `s` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_posterior_variance(s: *const DsSchedule, t: usize, out: *mut f64) -> DsStatus {
    guard(|| out_value(out, diffusion::posterior_variance(t, schedule(s)?)?, "out"))
}

/// Cumulative forward form at step `t` on fields of `n` values.
///
/// # Safety
/// Every field pointer must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_forward_cumulative(
    s: *const DsSchedule,
    t: usize,
    x0: *const f64,
    x_res: *const f64,
    x_lq: *const f64,
    eps: *const f64,
    n: usize,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let x = diffusion::forward_cumulative(
            &field(in_slice(x0, n, "x0")?),
            &field(in_slice(x_res, n, "x_res")?),
            &field(in_slice(x_lq, n, "x_lq")?),
            &field(in_slice(eps, n, "eps")?),
            t,
            schedule(s)?,
        )?;
        copy_into(out_slice(out, n, "out")?, x.as_slice().expect("contiguous"))
    })
}

/// One deterministic reverse step from `t` to `t - 1`.
///
/// # Safety
/// Every field pointer must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_reverse_step(
    s: *const DsSchedule,
    t: usize,
    x_t: *const f64,
    x_lq: *const f64,
    res_pred: *const f64,
    eps_pred: *const f64,
    n: usize,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let pred = PredictorOutput {
            res_pred: field(in_slice(res_pred, n, "res_pred")?),
            eps_pred: field(in_slice(eps_pred, n, "eps_pred")?),
        };
        let x = diffusion::reverse_step(
            &field(in_slice(x_t, n, "x_t")?),
            &field(in_slice(x_lq, n, "x_lq")?),
            &pred,
            t,
            schedule(s)?,
        )?;
        copy_into(out_slice(out, n, "out")?, x.as_slice().expect("contiguous"))
    })
}

/// Samples from `x_big_t` down to `x_0` with the oracle predictor built
/// from the true `x0` and `x_lq`, writing the final field to `out`.
///
/// # Safety
/// Every field pointer must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_oracle_sample(
    s: *const DsSchedule,
    x_big_t: *const f64,
    x0: *const f64,
    x_lq: *const f64,
    n: usize,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let s = schedule(s)?;
        let lq = field(in_slice(x_lq, n, "x_lq")?);
        let oracle = OraclePredictor::new(field(in_slice(x0, n, "x0")?), lq.clone(), s)?;
        let traj = diffusion::sample(&field(in_slice(x_big_t, n, "x_big_t")?), &lq, &oracle, s)?;
        let last = traj.last().expect("trajectory has T + 1 entries");
        copy_into(out_slice(out, n, "out")?, last.as_slice().expect("contiguous"))
    })
}

/// Generation loss over `batch` samples of `n / batch` values each.
///
/// # Safety
/// Every field pointer must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_loss_gen(
    res_pred: *const f64,
    res_true: *const f64,
    eps_pred: *const f64,
    eps_true: *const f64,
    n: usize,
    batch: usize,
    alpha: f64,
    beta: f64,
    beta_bar: f64,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let inputs = GenInputs {
            res_pred: in_slice(res_pred, n, "res_pred")?,
            res_true: in_slice(res_true, n, "res_true")?,
            eps_pred: in_slice(eps_pred, n, "eps_pred")?,
            eps_true: in_slice(eps_true, n, "eps_true")?,
            batch,
        };
        let v = losses::l_gen(inputs, StepCoefficients { alpha, beta, beta_bar })?;
        out_value(out, v, "out")
    })
}

/// Contrastive bridge loss between two `rows × dim` batches.
///
/// # Safety
/// Both batches must hold `rows * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_loss_bridge(
    f_mas: *const f64,
    f_diff: *const f64,
    rows: usize,
    dim: usize,
    temperature: f64,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let n = rows.saturating_mul(dim);
        let a = batch(in_slice(f_mas, n, "f_mas")?, rows, dim, FeatureSource::Mas)?;
        let b = batch(in_slice(f_diff, n, "f_diff")?, rows, dim, FeatureSource::Diff)?;
        out_value(out, losses::l_bridge(&a, &b, temperature)?, "out")
    })
}

/// Mean softmax cross-entropy of `rows × classes` logits.
///
/// # Safety
/// `logits` must hold `rows * classes` doubles and `labels` `rows` entries.
#[no_mangle]
pub unsafe extern "C" fn ds_loss_deg_cls(
    logits: *const f64,
    labels: *const usize,
    rows: usize,
    classes: usize,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let logits = in_slice(logits, rows.saturating_mul(classes), "logits")?;
        if labels.is_null() && rows > 0 {
            return Err(null("labels"));
        }
        let labels = if rows == 0 { &[][..] } else { slice::from_raw_parts(labels, rows) };
        out_value(out, losses::l_deg_cls(logits, classes, labels)?, "out")
    })
}

/// Full-negative contrastive loss between `rows1 × dim` and `rows2 × dim`.
///
/// # Safety
/// Batches must hold `rows1 * dim` and `rows2 * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_loss_fcnl(
    batch1: *const f64,
    rows1: usize,
    batch2: *const f64,
    rows2: usize,
    dim: usize,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let a = batch(in_slice(batch1, rows1.saturating_mul(dim), "batch1")?, rows1, dim, FeatureSource::Mas)?;
        let b = batch(in_slice(batch2, rows2.saturating_mul(dim), "batch2")?, rows2, dim, FeatureSource::Mas)?;
        out_value(out, losses::l_fcnl(&a, &b)?, "out")
    })
}

/// Worst relative gradient error of the named loss over `trials` random
/// instances (`"gen"`, `"bridge"`, `"deg-cls"`, `"bdg"`, `"rft"`, `"fcnl"`).
///
/// # Safety
/// `loss` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_grad_check(loss: *const c_char, trials: usize, epsilon: f64, seed: u64, out: *mut f64) -> DsStatus {
    guard(|| {
        let id: LossId = str_arg(loss, "loss")?.parse()?;
        let mut rng = degscope::degrade::seeded_rng(seed);
        let rec = gradcheck::sweep(id, trials, epsilon, &mut rng)?;
        out_value(out, rec.max_relative_error, "out")
    })
}
