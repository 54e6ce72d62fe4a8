#ifndef DEGSCOPE_H
#define DEGSCOPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Which coefficient array [`ds_schedule_coefficients`] copies out.
typedef enum DsCoefficient {
  DS_COEFFICIENT_ALPHA = 0,
  DS_COEFFICIENT_BETA = 1,
  DS_COEFFICIENT_DELTA = 2,
  DS_COEFFICIENT_ALPHA_BAR = 3,
  DS_COEFFICIENT_BETA_BAR = 4,
  DS_COEFFICIENT_DELTA_BAR = 5,
} DsCoefficient;

// Result codes. Values 1 to 13 mirror the library error kinds.
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_IO = 1,
  DS_STATUS_DECODE = 2,
  DS_STATUS_UNSUPPORTED_BIT_DEPTH = 3,
  DS_STATUS_INVALID_IMAGE = 4,
  DS_STATUS_DIMENSION_MISMATCH = 5,
  DS_STATUS_INVALID_ARGUMENT = 6,
  DS_STATUS_CONFIG = 7,
  DS_STATUS_SCHEDULE = 8,
  DS_STATUS_GATING = 9,
  DS_STATUS_DEGENERATE = 10,
  DS_STATUS_NUMERICAL = 11,
  DS_STATUS_MANIFEST = 12,
  DS_STATUS_JSON = 13,
  DS_STATUS_NULL_POINTER = 100,
  DS_STATUS_INVALID_UTF8 = 101,
  DS_STATUS_BUFFER_TOO_SMALL = 102,
  DS_STATUS_PANIC = 103,
} DsStatus;

// Opaque grayscale image.
typedef struct DsImage DsImage;

// Opaque diffusion schedule.
typedef struct DsSchedule DsSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length
// excluding the terminator; 0 when the last call succeeded.
//
// # Safety
// `buf` must be NULL or point to `len` writable bytes.
uintptr_t ds_last_error_message(char *buf, uintptr_t len);

// Loads a PNG or binary PNM file as a luma image.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DsStatus ds_image_load(const char *path, struct DsImage **out);

// Builds an image from `width * height` intensities in `[0, 255]`.
//
// # Safety
// `data` must hold `width * height` values; `out` must be writable.
enum DsStatus ds_image_new(uintptr_t width,
                           uintptr_t height,
                           const double *data,
                           struct DsImage **out);

// Releases an image handle.
//
// # Safety
// `img` must be NULL or a handle not yet freed.
void ds_image_free(struct DsImage *img);

// Writes the image size.
//
// # Safety
// All pointers must be valid.
enum DsStatus ds_image_size(const struct DsImage *img, uintptr_t *width, uintptr_t *height);

// Copies the row-major pixels into `out` (`len >= width * height`).
//
// # Safety
// `out` must point to `len` writable doubles.
enum DsStatus ds_image_pixels(const struct DsImage *img, double *out, uintptr_t len);

// Center crop to a `size × size` square.
//
// # Safety
// `img` must be a live handle; `out` must be writable.
enum DsStatus ds_image_center_crop(const struct DsImage *img, uintptr_t size, struct DsImage **out);

// Luma PSNR in dB (99 for identical images).
//
// # Safety
// Handles must be live; `out` must be writable.
enum DsStatus ds_psnr(const struct DsImage *a, const struct DsImage *b, double *out);

// Applies one degradation given as a spec string with a single level,
// e.g. `"gaussian:25"` or `"chain:5"`. A `seed=` field in the string
// overrides `seed`.
//
// # Safety
// `img` must be live, `spec` NUL-terminated, `out` writable.
enum DsStatus ds_degrade(const struct DsImage *img,
                         const char *spec,
                         uint64_t seed,
                         struct DsImage **out);

// MAS-GLCM of the image quantized to `levels` gray levels under the named
// angle/scale preset (`"full"`, `"nonnegative"`, `"axis"`). Writes
// `levels * levels` row-major cells.
//
// # Safety
// `img` must be live, `preset` NUL-terminated, `out` sized `len`.
enum DsStatus ds_mas_glcm(const struct DsImage *img,
                          uintptr_t levels,
                          const char *preset,
                          double *out,
                          uintptr_t len);

// Default-family schedule. `stage` is `"generation"`, `"bridging"` or
// `"restoration"`.
//
// # Safety
// `stage` must be NUL-terminated; `out` writable.
enum DsStatus ds_schedule_new(uintptr_t steps,
                              const char *stage,
                              double kappa,
                              double eta,
                              double shape,
                              struct DsSchedule **out);

// Releases a schedule handle.
//
// # Safety
// `s` must be NULL or a handle not yet freed.
void ds_schedule_free(struct DsSchedule *s);

// Number of steps `T`.
//
// # Safety
// `s` must be live; `out` writable.
enum DsStatus ds_schedule_steps(const struct DsSchedule *s, uintptr_t *out);

// Copies one coefficient array (`T + 1` values, index 0 is the sentinel).
// `which` is a [`DsCoefficient`] value.
//
// # Safety
// `s` must be live; `out` must hold `len` doubles.
enum DsStatus ds_schedule_coefficients(const struct DsSchedule *s,
                                       uint32_t which,
                                       double *out,
                                       uintptr_t len);

// Reverse posterior variance at step `t >= 1`.
//
// # Safety
// `s` must be live; `out` writable.
enum DsStatus ds_posterior_variance(const struct DsSchedule *s, uintptr_t t, double *out);

// Cumulative forward form at step `t` on fields of `n` values.
//
// # Safety
// Every field pointer must hold `n` doubles.
enum DsStatus ds_forward_cumulative(const struct DsSchedule *s,
                                    uintptr_t t,
                                    const double *x0,
                                    const double *x_res,
                                    const double *x_lq,
                                    const double *eps,
                                    uintptr_t n,
                                    double *out);

// One deterministic reverse step from `t` to `t - 1`.
//
// # Safety
// Every field pointer must hold `n` doubles.
enum DsStatus ds_reverse_step(const struct DsSchedule *s,
                              uintptr_t t,
                              const double *x_t,
                              const double *x_lq,
                              const double *res_pred,
                              const double *eps_pred,
                              uintptr_t n,
                              double *out);

// Samples from `x_big_t` down to `x_0` with the oracle predictor built
// from the true `x0` and `x_lq`, writing the final field to `out`.
//
// # Safety
// Every field pointer must hold `n` doubles.
enum DsStatus ds_oracle_sample(const struct DsSchedule *s,
                               const double *x_big_t,
                               const double *x0,
                               const double *x_lq,
                               uintptr_t n,
                               double *out);

// Generation loss over `batch` samples of `n / batch` values each.
//
// # Safety
// Every field pointer must hold `n` doubles.
enum DsStatus ds_loss_gen(const double *res_pred,
                          const double *res_true,
                          const double *eps_pred,
                          const double *eps_true,
                          uintptr_t n,
                          uintptr_t batch,
                          double alpha,
                          double beta,
                          double beta_bar,
                          double *out);

// Contrastive bridge loss between two `rows × dim` batches.
//
// # Safety
// Both batches must hold `rows * dim` doubles.
enum DsStatus ds_loss_bridge(const double *f_mas,
                             const double *f_diff,
                             uintptr_t rows,
                             uintptr_t dim,
                             double temperature,
                             double *out);

// Mean softmax cross-entropy of `rows × classes` logits.
//
// # Safety
// `logits` must hold `rows * classes` doubles and `labels` `rows` entries.
enum DsStatus ds_loss_deg_cls(const double *logits,
                              const uintptr_t *labels,
                              uintptr_t rows,
                              uintptr_t classes,
                              double *out);

// Full-negative contrastive loss between `rows1 × dim` and `rows2 × dim`.
//
// # Safety
// Batches must hold `rows1 * dim` and `rows2 * dim` doubles.
enum DsStatus ds_loss_fcnl(const double *batch1,
                           uintptr_t rows1,
                           const double *batch2,
                           uintptr_t rows2,
                           uintptr_t dim,
                           double *out);

// Worst relative gradient error of the named loss over `trials` random
// instances (`"gen"`, `"bridge"`, `"deg-cls"`, `"bdg"`, `"rft"`, `"fcnl"`).
//
// # Safety
// `loss` must be NUL-terminated; `out` writable.
enum DsStatus ds_grad_check(const char *loss,
                            uintptr_t trials,
                            double epsilon,
                            uint64_t seed,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEGSCOPE_H */
