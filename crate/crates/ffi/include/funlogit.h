#ifndef FUNLOGIT_H
#define FUNLOGIT_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum FlStatus {
  FlStatus_Ok = 0,
  // Null pointer or malformed argument.
  FlStatus_InvalidArgument = 1,
  // Input rejected by validation (dimensions, domains, grids).
  FlStatus_InvalidInput = 2,
  // No finite minimizer: one class after weighting or separation.
  FlStatus_Separation = 3,
  // Provided buffer is too small.
  FlStatus_BufferTooSmall = 4,
  // Internal panic; file a bug.
  FlStatus_Internal = 5,
} FlStatus;

// Loss selector for [`FlOptions`].
typedef enum FlLoss {
  FlLoss_Classical = 0,
  FlLoss_CrouxHaesbroeck = 1,
} FlLoss;

// Weighting selector for [`FlOptions`].
typedef enum FlWeights {
  FlWeights_Unit = 0,
  FlWeights_MahalanobisHardRejection = 1,
  FlWeights_FunctionalBoxplotHardRejection = 2,
} FlWeights;

// Basis selector for [`FlOptions`].
typedef enum FlBasis {
  FlBasis_BSpline = 0,
  FlBasis_Fourier = 1,
} FlBasis;

// A labeled functional dataset (opaque).
typedef struct FlDataset FlDataset;

// A fitted model together with its basis (opaque).
typedef struct FlFit FlFit;

// Residual diagnostics (opaque).
typedef struct FlReport FlReport;

// Plain-old-data fitting options; fill with `fl_default_options` first.
typedef struct FlOptions {
  enum FlLoss loss;
  // Tuning constant of the bounded loss.
  double ch_c;
  enum FlWeights weights;
  uint64_t weight_seed;
  double mahalanobis_quantile;
  size_t n_directions;
  double boxplot_factor;
  enum FlBasis basis;
  size_t spline_order;
  // Fixed dimension; 0 scans by the robust information criterion.
  size_t k_fixed;
  // Scan bounds; 0 means derive from the sample size.
  size_t k_min;
  size_t k_max;
  double grad_tol;
  size_t max_iter;
  size_t n_starts;
} FlOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`); returns the full message length in bytes.
//
// # Safety
// `buf` must point to `len` writable bytes, or be null (size query).
size_t fl_last_error_message(char *buf, size_t len);

// Builds a dataset from a grid, row-major curve values (`n_curves` x
// `grid_len`) and 0/1 responses of length `n_curves`.
//
// # Safety
// All pointers must reference buffers of the stated lengths; `out` must be
// a valid destination for one pointer.
enum FlStatus fl_dataset_new(const double *grid,
                             size_t grid_len,
                             const double *values_row_major,
                             size_t n_curves,
                             const uint8_t *responses,
                             struct FlDataset **out);

// Frees a dataset handle. Null is ignored.
//
// # Safety
// `dataset` must come from `fl_dataset_new` and not be freed twice.
void fl_dataset_free(struct FlDataset *dataset);

// Number of curves in a dataset; 0 for null.
//
// # Safety
// `dataset` must be a live handle or null.
size_t fl_dataset_len(const struct FlDataset *dataset);

// Writes the default options.
//
// # Safety
// `out` must point to writable [`FlOptions`] storage.
enum FlStatus fl_default_options(struct FlOptions *out);

// Fits the weighted M-estimator, choosing the basis dimension by the
// robust information criterion unless the options fix it.
//
// # Safety
// `dataset` and `options` must be live; `out` must be a valid destination.
enum FlStatus fl_fit(const struct FlDataset *dataset,
                     const struct FlOptions *options,
                     struct FlFit **out);

// Frees a fit handle. Null is ignored.
//
// # Safety
// `fit` must come from `fl_fit` and not be freed twice.
void fl_fit_free(struct FlFit *fit);

// # Safety
// `fit` must be a live handle.
double fl_fit_alpha(const struct FlFit *fit);

// # Safety
// `fit` must be a live handle.
size_t fl_fit_k(const struct FlFit *fit);

// # Safety
// `fit` must be a live handle.
double fl_fit_objective(const struct FlFit *fit);

// # Safety
// `fit` must be a live handle.
double fl_fit_rbic(const struct FlFit *fit);

// 1 when the optimizer met its tolerance.
//
// # Safety
// `fit` must be a live handle.
uint8_t fl_fit_converged(const struct FlFit *fit);

// Copies the basis coefficients; the buffer needs `fl_fit_k` slots.
//
// # Safety
// `fit` must be live and `buf` point to `len` writable doubles.
enum FlStatus fl_fit_coeffs(const struct FlFit *fit, double *buf, size_t len);

// Copies the slope curve evaluated on the training grid; the buffer needs
// one slot per grid point.
//
// # Safety
// `fit` must be live and `buf` point to `len` writable doubles.
enum FlStatus fl_fit_slope(const struct FlFit *fit, double *buf, size_t len);

// Copies the covariate weights used by the fit (one per observation).
//
// # Safety
// `fit` must be live and `buf` point to `len` writable doubles.
enum FlStatus fl_fit_weights(const struct FlFit *fit, double *buf, size_t len);

// Predicted success probabilities on a dataset sharing the training grid;
// the buffer needs one slot per curve.
//
// # Safety
// Handles must be live and `buf` point to `len` writable doubles.
enum FlStatus fl_fit_predict(const struct FlFit *fit,
                             const struct FlDataset *dataset,
                             double *buf,
                             size_t len);

// Residual diagnostics of a fit on a dataset, flagging outside the given
// distribution levels (use 0.005 and 0.995 for the standard rule).
//
// # Safety
// Handles must be live; `out` must be a valid destination.
enum FlStatus fl_diagnose(const struct FlFit *fit,
                          const struct FlDataset *dataset,
                          double level_low,
                          double level_high,
                          struct FlReport **out);

// Frees a report handle. Null is ignored.
//
// # Safety
// `report` must come from `fl_diagnose` and not be freed twice.
void fl_report_free(struct FlReport *report);

// Number of observations in a report; 0 for null.
//
// # Safety
// `report` must be a live handle or null.
size_t fl_report_len(const struct FlReport *report);

// Lower and upper residual cutoffs.
//
// # Safety
// `report` must be live; `low`/`high` must be writable.
enum FlStatus fl_report_cutoffs(const struct FlReport *report, double *low, double *high);

// Copies the deviance residuals.
//
// # Safety
// `report` must be live and `buf` point to `len` writable doubles.
enum FlStatus fl_report_residuals(const struct FlReport *report, double *buf, size_t len);

// Copies the predicted probabilities used by the report.
//
// # Safety
// `report` must be live and `buf` point to `len` writable doubles.
enum FlStatus fl_report_probs(const struct FlReport *report, double *buf, size_t len);

// Copies the outlier flags (1 = flagged).
//
// # Safety
// `report` must be live and `buf` point to `len` writable bytes.
enum FlStatus fl_report_flags(const struct FlReport *report, uint8_t *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUNLOGIT_H */
