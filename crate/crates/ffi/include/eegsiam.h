#ifndef EEGSIAM_H
#define EEGSIAM_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum EegsiamStatus {
  EEGSIAM_STATUS_OK = 0,
  EEGSIAM_STATUS_NULL_POINTER = 1,
  EEGSIAM_STATUS_INVALID_UTF8 = 2,
  EEGSIAM_STATUS_INVALID_PARAMETER = 3,
  EEGSIAM_STATUS_DATA = 4,
  EEGSIAM_STATUS_NUMERICAL = 5,
  EEGSIAM_STATUS_IO = 6,
  EEGSIAM_STATUS_BUFFER_TOO_SMALL = 7,
  EEGSIAM_STATUS_PANIC = 8,
} EegsiamStatus;

/**
 * Loaded or generated cohort.
 */
typedef struct EegsiamDataset EegsiamDataset;

/**
 * Trained base network.
 */
typedef struct EegsiamModel EegsiamModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *eegsiam_last_error(void);

/**
 * # Safety
 * `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EegsiamStatus eegsiam_dataset_load(const char *manifest_path, struct EegsiamDataset **out);

/**
 * Synthetic cohort with the default band profiles at 128 Hz.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EegsiamStatus eegsiam_dataset_synthetic(uint32_t n_case,
                                             uint32_t n_control,
                                             uint32_t n_channels,
                                             double duration_s,
                                             uint64_t seed,
                                             struct EegsiamDataset **out);

/**
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t eegsiam_dataset_len(const struct EegsiamDataset *dataset);

/**
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t eegsiam_dataset_channels(const struct EegsiamDataset *dataset);

/**
 * # Safety
 * `dataset` must be NULL or a handle not yet freed.
 */
void eegsiam_dataset_free(struct EegsiamDataset *dataset);

/**
 * Image size `bins x frames` that [`eegsiam_dstft`] produces.
 *
 * # Safety
 * `bins` and `frames` must be valid pointers.
 */
enum EegsiamStatus eegsiam_dstft_shape(size_t n_samples,
                                       double sample_rate_hz,
                                       double window_s,
                                       double hop_s,
                                       size_t *bins,
                                       size_t *frames);

/**
 * Normalised magnitude image of one channel, written row-major
 * (frequency-major) into `out`, which must hold `bins * frames` doubles.
 *
 * # Safety
 * `signal` must point to `n_samples` doubles and `out` to `out_len` doubles.
 */
enum EegsiamStatus eegsiam_dstft(const double *signal,
                                 size_t n_samples,
                                 double sample_rate_hz,
                                 double window_s,
                                 double hop_s,
                                 double upper_value,
                                 double *out,
                                 size_t out_len);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EegsiamStatus eegsiam_model_load(const char *path, struct EegsiamModel **out);

/**
 * # Safety
 * `model` must be a live handle; `bins` and `frames` valid pointers.
 */
enum EegsiamStatus eegsiam_model_input_shape(const struct EegsiamModel *model,
                                             size_t *bins,
                                             size_t *frames);

/**
 * Feature dimension, or 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t eegsiam_model_output_dim(const struct EegsiamModel *model);

/**
 * Eval-mode embedding of a row-major `bins x frames` image.
 *
 * # Safety
 * `image` must point to `bins * frames` doubles and `out` to `out_len` doubles.
 */
enum EegsiamStatus eegsiam_model_embed(const struct EegsiamModel *model,
                                       const double *image,
                                       size_t bins,
                                       size_t frames,
                                       double *out,
                                       size_t out_len);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void eegsiam_model_free(struct EegsiamModel *model);

/**
 * Cosine distance `1 - cos(a, b)` clamped to `[0, 2]`.
 *
 * # Safety
 * `a` and `b` must each point to `len` doubles; `out` must be valid.
 */
enum EegsiamStatus eegsiam_cosine_distance(const double *a,
                                           const double *b,
                                           size_t len,
                                           double *out);

/**
 * `y d^2 + (1 - y) max(0, m - d)^2`; `y` is 1 for same-label pairs.
 */
double eegsiam_contrastive_loss(uint8_t y, double distance, double margin);

/**
 * Runs a pipeline such as `"FFT-kNN"` or `"DSTFT-SNN-XGB"` and returns its
 * report as JSON in `*report_json`. `config_json` may be NULL for defaults.
 *
 * # Safety
 * `dataset` must be a live handle, strings NUL-terminated, `report_json` valid.
 */
enum EegsiamStatus eegsiam_run_pipeline(const struct EegsiamDataset *dataset,
                                        const char *pipeline_id,
                                        const char *config_json,
                                        char **report_json);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void eegsiam_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EEGSIAM_H */
