#ifndef AERIS_H
#define AERIS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AerisStatus {
  AERIS_STATUS_OK = 0,
  AERIS_STATUS_NULL_POINTER = 1,
  AERIS_STATUS_INVALID_ARGUMENT = 2,
  AERIS_STATUS_IO = 3,
  AERIS_STATUS_PARSE = 4,
  AERIS_STATUS_DATA = 5,
  AERIS_STATUS_MODEL = 6,
  AERIS_STATUS_CHECKPOINT = 7,
  AERIS_STATUS_CONFIG = 8,
  AERIS_STATUS_UNDEFINED = 9,
  AERIS_STATUS_PANIC = 99,
} AerisStatus;

/**
 * An hourly table; missing cells read back as NaN.
 */
typedef struct AerisFrame AerisFrame;

/**
 * A trained and cleaned run directory opened for forecasting.
 */
typedef struct AerisRun AerisRun;

/**
 * Accuracy of one forecast vector. `r2_defined` is 0 when the truth is
 * constant, in which case `r2` is NaN.
 */
typedef struct AerisMetrics {
  double mae;
  double rmse;
  double r2;
  int32_t r2_defined;
  size_t n;
} AerisMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *aeris_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *aeris_last_error(void);

/**
 * Reads a `;`-separated hourly station file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum AerisStatus aeris_frame_read(const char *path, struct AerisFrame **out);

/**
 * Generates the seeded synthetic station table, spikes and gaps included.
 *
 * # Safety
 * `out` is writable.
 */
enum AerisStatus aeris_frame_synth(uint64_t seed, size_t hours, struct AerisFrame **out);

/**
 * Releases a frame; null is ignored.
 *
 * # Safety
 * `frame` is null or came from this library and is not used afterwards.
 */
void aeris_frame_free(struct AerisFrame *frame);

/**
 * # Safety
 * `frame` is a live frame; `out` is writable.
 */
enum AerisStatus aeris_frame_rows(const struct AerisFrame *frame, size_t *out);

/**
 * Copies one column into `buf`, writing NaN for missing cells. `len` must
 * equal the row count.
 *
 * # Safety
 * `frame` is a live frame; `name` is a NUL-terminated string; `buf` is
 * valid for `len` writes.
 */
enum AerisStatus aeris_frame_column(const struct AerisFrame *frame,
                                    const char *name,
                                    double *buf,
                                    size_t len);

/**
 * Removes outliers, interpolates gaps and clamps pollutants at zero.
 * `threshold <= 0` or `span == 0` selects the default for that setting.
 * `outliers`, when not null, receives the total number of removed values.
 *
 * # Safety
 * `frame` is a live frame; `out` is writable; `outliers` is null or
 * writable.
 */
enum AerisStatus aeris_frame_clean(const struct AerisFrame *frame,
                                   double threshold,
                                   size_t span,
                                   struct AerisFrame **out,
                                   size_t *outliers);

/**
 * MAE, RMSE and R² of `y_pred` against `y_true`, both of length `n`.
 *
 * # Safety
 * Both arrays are valid for `n` reads; `out` is writable.
 */
enum AerisStatus aeris_metrics(const double *y_true,
                               const double *y_pred,
                               size_t n,
                               struct AerisMetrics *out);

/**
 * Opens a run directory written by `aeris train` (or `aeris all`) and
 * loads every checkpointed model.
 *
 * # Safety
 * `dir` is a NUL-terminated string; `out` is writable.
 */
enum AerisStatus aeris_run_open(const char *dir, struct AerisRun **out);

/**
 * # Safety
 * `run` is null or came from this library and is not used afterwards.
 */
void aeris_run_free(struct AerisRun *run);

/**
 * Number of loaded models, their rows of history, and the first test row.
 *
 * # Safety
 * `run` is a live run; each output is null or writable.
 */
enum AerisStatus aeris_run_info(const struct AerisRun *run,
                                size_t *models,
                                size_t *rows,
                                size_t *test_start);

/**
 * Name of model `index`, owned by the run; null when out of range.
 *
 * # Safety
 * `run` is null or a live run.
 */
const char *aeris_run_model_name(const struct AerisRun *run, size_t index);

/**
 * Forecast of the target `horizon` hours after row `anchor`, in the
 * target's units. Only history up to `anchor` is read, except that
 * ARIMA models with exogenous regressors read them up to the forecast hour.
 *
 * # Safety
 * `run` is a live run; `model` is a NUL-terminated string; `out` is
 * writable.
 */
enum AerisStatus aeris_run_forecast(const struct AerisRun *run,
                                    const char *model,
                                    size_t anchor,
                                    size_t horizon,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AERIS_H */
