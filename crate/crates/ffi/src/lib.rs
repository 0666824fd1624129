//! C ABI for the funlogit library.
//!
//! The interface follows the usual opaque-handle pattern: datasets, fits and
//! residual reports are created behind pointers, every fallible call returns
//! an [`FlStatus`] code, and the last error message is retrievable per
//! thread. Buffers are always caller-allocated; size queries come first.
//!
//! The matching header (`include/funlogit.h`) is generated by cbindgen at
//! build time.

use funlogit::diagnostics::{self, ResidualReport};
use funlogit::fit::{self, FitConfig, FitResult};
use funlogit::funcbasis::{self, BasisFamily, BasisMatrix, CurveSet, Grid, LabeledSample};
use funlogit::loss::LossSpec;
use funlogit::weights::WeightSpec;
use funlogit::Error;
use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    /// Null pointer or malformed argument.
    InvalidArgument = 1,
    /// Input rejected by validation (dimensions, domains, grids).
    InvalidInput = 2,
    /// No finite minimizer: one class after weighting or separation.
    Separation = 3,
    /// Provided buffer is too small.
    BufferTooSmall = 4,
    /// Internal panic; file a bug.
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
}

fn status_from(err: &Error) -> FlStatus {
    match err {
        Error::Separation(_) => FlStatus::Separation,
        _ => FlStatus::InvalidInput,
    }
}

fn fail(err: Error) -> FlStatus {
    let code = status_from(&err);
    set_error(err.to_string());
    code
}

fn invalid(message: &str) -> FlStatus {
    set_error(message);
    FlStatus::InvalidArgument
}

fn guard<F: FnOnce() -> FlStatus>(body: F) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            FlStatus::Internal
        }
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`); returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (size query).
#[no_mangle]
pub unsafe extern "C" fn fl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// A labeled functional dataset (opaque).
pub struct FlDataset {
    sample: LabeledSample,
}

/// A fitted model together with its basis (opaque).
pub struct FlFit {
    result: FitResult,
    basis: BasisMatrix,
}

/// Residual diagnostics (opaque).
pub struct FlReport {
    report: ResidualReport,
}

/// Builds a dataset from a grid, row-major curve values (`n_curves` x
/// `grid_len`) and 0/1 responses of length `n_curves`.
///
/// # Safety
/// All pointers must reference buffers of the stated lengths; `out` must be
/// a valid destination for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_new(
    grid: *const f64,
    grid_len: usize,
    values_row_major: *const f64,
    n_curves: usize,
    responses: *const u8,
    out: *mut *mut FlDataset,
) -> FlStatus {
    guard(|| {
        if grid.is_null() || values_row_major.is_null() || responses.is_null() || out.is_null() {
            return invalid("fl_dataset_new: null pointer argument");
        }
        let grid_points = std::slice::from_raw_parts(grid, grid_len).to_vec();
        let grid = match Grid::new(grid_points) {
            Ok(g) => g,
            Err(e) => return fail(e),
        };
        let flat = std::slice::from_raw_parts(values_row_major, n_curves * grid_len);
        let values = nalgebra::DMatrix::from_row_slice(n_curves, grid_len, flat);
        let curves = match CurveSet::new(grid, values) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let ys = std::slice::from_raw_parts(responses, n_curves).to_vec();
        match LabeledSample::new(curves, ys) {
            Ok(sample) => {
                *out = Box::into_raw(Box::new(FlDataset { sample }));
                FlStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Frees a dataset handle. Null is ignored.
///
/// # Safety
/// `dataset` must come from `fl_dataset_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_free(dataset: *mut FlDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of curves in a dataset; 0 for null.
///
/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_len(dataset: *const FlDataset) -> usize {
    if dataset.is_null() {
        0
    } else {
        (*dataset).sample.len()
    }
}

/// Loss selector for [`FlOptions`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlLoss {
    Classical = 0,
    CrouxHaesbroeck = 1,
}

/// Weighting selector for [`FlOptions`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlWeights {
    Unit = 0,
    MahalanobisHardRejection = 1,
    FunctionalBoxplotHardRejection = 2,
}

/// Basis selector for [`FlOptions`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlBasis {
    BSpline = 0,
    Fourier = 1,
}

/// Plain-old-data fitting options; fill with `fl_default_options` first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FlOptions {
    pub loss: FlLoss,
    /// Tuning constant of the bounded loss.
    pub ch_c: f64,
    pub weights: FlWeights,
    pub weight_seed: u64,
    pub mahalanobis_quantile: f64,
    pub n_directions: usize,
    pub boxplot_factor: f64,
    pub basis: FlBasis,
    pub spline_order: usize,
    /// Fixed dimension; 0 scans by the robust information criterion.
    pub k_fixed: usize,
    /// Scan bounds; 0 means derive from the sample size.
    pub k_min: usize,
    pub k_max: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
}

/// Writes the default options.
///
/// # Safety
/// `out` must point to writable [`FlOptions`] storage.
#[no_mangle]
pub unsafe extern "C" fn fl_default_options(out: *mut FlOptions) -> FlStatus {
    if out.is_null() {
        return invalid("fl_default_options: null pointer");
    }
    *out = FlOptions {
        loss: FlLoss::CrouxHaesbroeck,
        ch_c: 0.5,
        weights: FlWeights::MahalanobisHardRejection,
        weight_seed: 0,
        mahalanobis_quantile: 0.975,
        n_directions: 250,
        boxplot_factor: 1.5,
        basis: FlBasis::BSpline,
        spline_order: 4,
        k_fixed: 0,
        k_min: 0,
        k_max: 0,
        grad_tol: 1e-8,
        max_iter: 200,
        n_starts: 1,
    };
    FlStatus::Ok
}

fn config_from(options: &FlOptions) -> FitConfig {
    let loss = match options.loss {
        FlLoss::Classical => LossSpec::Classical,
        FlLoss::CrouxHaesbroeck => LossSpec::CrouxHaesbroeck { c: options.ch_c },
    };
    let weights = match options.weights {
        FlWeights::Unit => WeightSpec::Unit,
        FlWeights::MahalanobisHardRejection => WeightSpec::MahalanobisHR {
            quantile: options.mahalanobis_quantile,
            n_directions: options.n_directions,
            rng_seed: options.weight_seed,
        },
        FlWeights::FunctionalBoxplotHardRejection => WeightSpec::FunctionalBoxplotHR {
            factor: options.boxplot_factor,
        },
    };
    let basis = match options.basis {
        FlBasis::BSpline => BasisFamily::BSpline {
            order: options.spline_order,
        },
        FlBasis::Fourier => BasisFamily::Fourier,
    };
    let mut config = FitConfig::new(loss, weights, basis);
    config.k_range = if options.k_fixed > 0 {
        Some((options.k_fixed, options.k_fixed))
    } else if options.k_min > 0 && options.k_max > 0 {
        Some((options.k_min, options.k_max))
    } else {
        None
    };
    config.grad_tol = options.grad_tol;
    config.max_iter = options.max_iter;
    config.n_starts = options.n_starts;
    config
}

/// Fits the weighted M-estimator, choosing the basis dimension by the
/// robust information criterion unless the options fix it.
///
/// # Safety
/// `dataset` and `options` must be live; `out` must be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn fl_fit(
    dataset: *const FlDataset,
    options: *const FlOptions,
    out: *mut *mut FlFit,
) -> FlStatus {
    guard(|| {
        if dataset.is_null() || options.is_null() || out.is_null() {
            return invalid("fl_fit: null pointer argument");
        }
        let sample = &(*dataset).sample;
        let config = config_from(&*options);
        let result = match fit::select_k(sample, &config) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        let basis = match funcbasis::design(&sample.curves.grid, result.k, config.basis_family) {
            Ok(b) => b,
            Err(e) => return fail(e),
        };
        *out = Box::into_raw(Box::new(FlFit { result, basis }));
        FlStatus::Ok
    })
}

/// Frees a fit handle. Null is ignored.
///
/// # Safety
/// `fit` must come from `fl_fit` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_free(fit: *mut FlFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_alpha(fit: *const FlFit) -> f64 {
    if fit.is_null() {
        f64::NAN
    } else {
        (*fit).result.alpha
    }
}

/// # Safety
/// `fit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_k(fit: *const FlFit) -> usize {
    if fit.is_null() {
        0
    } else {
        (*fit).result.k
    }
}

/// # Safety
/// `fit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_objective(fit: *const FlFit) -> f64 {
    if fit.is_null() {
        f64::NAN
    } else {
        (*fit).result.objective
    }
}

/// # Safety
/// `fit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_rbic(fit: *const FlFit) -> f64 {
    if fit.is_null() {
        f64::NAN
    } else {
        (*fit).result.rbic
    }
}

/// 1 when the optimizer met its tolerance.
///
/// # Safety
/// `fit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_converged(fit: *const FlFit) -> u8 {
    if fit.is_null() {
        0
    } else {
        u8::from((*fit).result.converged)
    }
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> FlStatus {
    if buf.is_null() {
        return invalid("null output buffer");
    }
    if len < src.len() {
        set_error(format!("buffer of {len} for {} values", src.len()));
        return FlStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    FlStatus::Ok
}

/// Copies the basis coefficients; the buffer needs `fl_fit_k` slots.
///
/// # Safety
/// `fit` must be live and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_coeffs(fit: *const FlFit, buf: *mut f64, len: usize) -> FlStatus {
    guard(|| {
        if fit.is_null() {
            return invalid("fl_fit_coeffs: null fit");
        }
        copy_out(&(*fit).result.coeffs, buf, len)
    })
}

/// Copies the slope curve evaluated on the training grid; the buffer needs
/// one slot per grid point.
///
/// # Safety
/// `fit` must be live and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_slope(fit: *const FlFit, buf: *mut f64, len: usize) -> FlStatus {
    guard(|| {
        if fit.is_null() {
            return invalid("fl_fit_slope: null fit");
        }
        copy_out(&(*fit).result.slope, buf, len)
    })
}

/// Copies the covariate weights used by the fit (one per observation).
///
/// # Safety
/// `fit` must be live and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_weights(fit: *const FlFit, buf: *mut f64, len: usize) -> FlStatus {
    guard(|| {
        if fit.is_null() {
            return invalid("fl_fit_weights: null fit");
        }
        copy_out(&(*fit).result.weights_used, buf, len)
    })
}

/// Predicted success probabilities on a dataset sharing the training grid;
/// the buffer needs one slot per curve.
///
/// # Safety
/// Handles must be live and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_predict(
    fit: *const FlFit,
    dataset: *const FlDataset,
    buf: *mut f64,
    len: usize,
) -> FlStatus {
    guard(|| {
        if fit.is_null() || dataset.is_null() {
            return invalid("fl_fit_predict: null pointer argument");
        }
        let handle = &*fit;
        let sample = &(*dataset).sample;
        match diagnostics::predict_probs(&handle.result, &handle.basis, &sample.curves) {
            Ok(probs) => copy_out(&probs, buf, len),
            Err(e) => fail(e),
        }
    })
}

/// Residual diagnostics of a fit on a dataset, flagging outside the given
/// distribution levels (use 0.005 and 0.995 for the standard rule).
///
/// # Safety
/// Handles must be live; `out` must be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn fl_diagnose(
    fit: *const FlFit,
    dataset: *const FlDataset,
    level_low: f64,
    level_high: f64,
    out: *mut *mut FlReport,
) -> FlStatus {
    guard(|| {
        if fit.is_null() || dataset.is_null() || out.is_null() {
            return invalid("fl_diagnose: null pointer argument");
        }
        let handle = &*fit;
        let sample = &(*dataset).sample;
        let probs = match diagnostics::predict_probs(&handle.result, &handle.basis, &sample.curves)
        {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match diagnostics::flag_outliers(&sample.responses, &probs, (level_low, level_high)) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(FlReport { report }));
                FlStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Frees a report handle. Null is ignored.
///
/// # Safety
/// `report` must come from `fl_diagnose` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fl_report_free(report: *mut FlReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of observations in a report; 0 for null.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_report_len(report: *const FlReport) -> usize {
    if report.is_null() {
        0
    } else {
        (*report).report.residuals.len()
    }
}

/// Lower and upper residual cutoffs.
///
/// # Safety
/// `report` must be live; `low`/`high` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_report_cutoffs(
    report: *const FlReport,
    low: *mut f64,
    high: *mut f64,
) -> FlStatus {
    if report.is_null() || low.is_null() || high.is_null() {
        return invalid("fl_report_cutoffs: null pointer argument");
    }
    *low = (*report).report.cutoff_low;
    *high = (*report).report.cutoff_high;
    FlStatus::Ok
}

/// Copies the deviance residuals.
///
/// # Safety
/// `report` must be live and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_report_residuals(
    report: *const FlReport,
    buf: *mut f64,
    len: usize,
) -> FlStatus {
    guard(|| {
        if report.is_null() {
            return invalid("fl_report_residuals: null report");
        }
        copy_out(&(*report).report.residuals, buf, len)
    })
}

/// Copies the predicted probabilities used by the report.
///
/// # Safety
/// `report` must be live and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_report_probs(
    report: *const FlReport,
    buf: *mut f64,
    len: usize,
) -> FlStatus {
    guard(|| {
        if report.is_null() {
            return invalid("fl_report_probs: null report");
        }
        copy_out(&(*report).report.probs, buf, len)
    })
}

/// Copies the outlier flags (1 = flagged).
///
/// # Safety
/// `report` must be live and `buf` point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fl_report_flags(
    report: *const FlReport,
    buf: *mut u8,
    len: usize,
) -> FlStatus {
    guard(|| {
        if report.is_null() {
            return invalid("fl_report_flags: null report");
        }
        if buf.is_null() {
            return invalid("null output buffer");
        }
        let flags = &(*report).report.outlier_flags;
        if len < flags.len() {
            set_error(format!("buffer of {len} for {} flags", flags.len()));
            return FlStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(flags.as_ptr(), buf, flags.len());
        FlStatus::Ok
    })
}
