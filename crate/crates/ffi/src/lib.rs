//! C ABI for the exp-Lasso.
//!
//! Objects are opaque handles created by `*_new`/`explasso_fit`/
//! `explasso_calibrate` and released with the matching `*_free`. Every
//! fallible call returns an [`ExplassoStatus`]; on failure the message is
//! available from [`explasso_last_error`] on the same thread. Matrices are
//! passed row-major. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use explasso::calibration::{calibrate, CalibrationResult};
use explasso::design::{load_csv, Dataset};
use explasso::noise::{FisherMethod, NoiseModel};
use explasso::solver::{fit_exp_lasso_at, FitConfig, FitResult};
use explasso::Error;
use nalgebra::{DMatrix, DVector};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplassoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Numeric = 5,
    Rank = 6,
    Dimension = 7,
    Panic = 8,
}

/// A noise model.
pub struct ExplassoModel {
    inner: NoiseModel,
}

/// A response with its design.
pub struct ExplassoDataset {
    inner: Dataset,
}

/// A fitted exp-Lasso.
pub struct ExplassoFit {
    inner: FitResult,
}

/// A Monte Carlo calibration of λ.
pub struct ExplassoCalibration {
    inner: CalibrationResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ExplassoStatus {
    match e {
        Error::Parameter(_) | Error::Domain(_) => ExplassoStatus::InvalidArgument,
        Error::Parse { .. } | Error::Schema(_) => ExplassoStatus::Parse,
        Error::Io(_) => ExplassoStatus::Io,
        Error::Numeric(_) => ExplassoStatus::Numeric,
        Error::Rank(_) => ExplassoStatus::Rank,
        Error::Dimension(_) => ExplassoStatus::Dimension,
    }
}

struct Fail(ExplassoStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ExplassoStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(ExplassoStatus::InvalidArgument, msg.into())
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> ExplassoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ExplassoStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            ExplassoStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies `values` into a caller buffer of `len` entries.
unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < values.len() {
        return Err(Fail(
            ExplassoStatus::Dimension,
            format!("buffer holds {len} values, need {}", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn explasso_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses `gaussian`, `subbotin:<r>`, `logistic`, `huber` or `gumbel`.
///
/// # Safety
/// `spec` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn explasso_model_new(spec: *const c_char, out: *mut *mut ExplassoModel) -> ExplassoStatus {
    guard(|| {
        let model: NoiseModel = str_arg(spec, "spec")?.parse()?;
        store(out, ExplassoModel { inner: model })
    })
}

/// # Safety
/// `model` must come from `explasso_model_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn explasso_model_free(model: *mut ExplassoModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fisher information at (0, 1) as a row-major 2×2 matrix ordered
/// (scale, location), plus its inverse.
///
/// # Safety
/// `info` and `inverse` must each point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn explasso_fisher_info(
    model: *const ExplassoModel,
    info: *mut f64,
    inverse: *mut f64,
) -> ExplassoStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let fi = m.inner.fisher_info(FisherMethod::Quadrature)?;
        let a = fi.matrix();
        let b = fi.inverse()?;
        copy_out(&[a[0][0], a[0][1], a[1][0], a[1][1]], info, 4)?;
        copy_out(&[b[0][0], b[0][1], b[1][0], b[1][1]], inverse, 4)
    })
}

/// Builds a dataset from `y` (length `n`) and a row-major `n × p` design.
/// `penalized` may be null (every column penalized) or hold `p` flags.
/// With `intercept` nonzero an unpenalized intercept is prepended and the
/// penalized columns are centered.
///
/// # Safety
/// The arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn explasso_dataset_new(
    y: *const f64,
    x: *const f64,
    n: usize,
    p: usize,
    penalized: *const u8,
    intercept: i32,
    out: *mut *mut ExplassoDataset,
) -> ExplassoStatus {
    guard(|| {
        let y = slice(y, n, "y")?;
        let x = slice(x, n.checked_mul(p).ok_or_else(|| invalid("n·p overflows"))?, "x")?;
        let mask = if penalized.is_null() {
            None
        } else {
            Some(std::slice::from_raw_parts(penalized, p).iter().map(|&b| b != 0).collect())
        };
        let ds = Dataset::new(DVector::from_column_slice(y), DMatrix::from_row_slice(n, p, x), mask)?;
        let ds = if intercept != 0 { ds.with_intercept() } else { ds };
        store(out, ExplassoDataset { inner: ds })
    })
}

/// Reads a CSV file with a `y` column; every other column is a predictor.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn explasso_dataset_from_csv(
    path: *const c_char,
    intercept: i32,
    out: *mut *mut ExplassoDataset,
) -> ExplassoStatus {
    guard(|| {
        let ds = load_csv(str_arg(path, "path")?)?;
        let ds = if intercept != 0 { ds.with_intercept() } else { ds };
        store(out, ExplassoDataset { inner: ds })
    })
}

/// Number of observations, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_dataset_n(ds: *const ExplassoDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.n())
}

/// Number of columns including any intercept, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_dataset_p(ds: *const ExplassoDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.p())
}

/// # Safety
/// `ds` must come from a dataset constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn explasso_dataset_free(ds: *mut ExplassoDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Calibrates λ on the dataset's design by `n_reps` Monte Carlo draws.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn explasso_calibrate(
    ds: *const ExplassoDataset,
    model: *const ExplassoModel,
    alpha: f64,
    eta: f64,
    n_reps: usize,
    seed: u64,
    out: *mut *mut ExplassoCalibration,
) -> ExplassoStatus {
    guard(|| {
        let d = &deref(ds, "dataset")?.inner;
        let m = &deref(model, "model")?.inner;
        let cal = calibrate(d.x(), d.penalty_mask(), m, alpha, eta, n_reps, seed)?;
        store(out, ExplassoCalibration { inner: cal })
    })
}

/// Calibrated λ = quantile/(1 − η), or NaN for a null handle.
///
/// # Safety
/// `cal` must be null or a live calibration handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_calibration_lambda(cal: *const ExplassoCalibration) -> f64 {
    cal.as_ref().map_or(f64::NAN, |c| c.inner.lambda)
}

/// Empirical (1 − α)-quantile of λ*, or NaN for a null handle.
///
/// # Safety
/// `cal` must be null or a live calibration handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_calibration_quantile(cal: *const ExplassoCalibration) -> f64 {
    cal.as_ref().map_or(f64::NAN, |c| c.inner.quantile)
}

/// Monte Carlo bracket of the quantile.
///
/// # Safety
/// `lo` and `hi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn explasso_calibration_bracket(
    cal: *const ExplassoCalibration,
    lo: *mut f64,
    hi: *mut f64,
) -> ExplassoStatus {
    guard(|| {
        let c = &deref(cal, "calibration")?.inner;
        if lo.is_null() || hi.is_null() {
            return Err(null("bracket output"));
        }
        *lo = c.mc_bracket.0;
        *hi = c.mc_bracket.1;
        Ok(())
    })
}

/// Number of λ* samples, or 0 for a null handle.
///
/// # Safety
/// `cal` must be null or a live calibration handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_calibration_len(cal: *const ExplassoCalibration) -> usize {
    cal.as_ref().map_or(0, |c| c.inner.lambda_star_samples.len())
}

/// Copies the sorted λ* samples into `out` (at least `len` entries).
///
/// # Safety
/// `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn explasso_calibration_samples(
    cal: *const ExplassoCalibration,
    out: *mut f64,
    len: usize,
) -> ExplassoStatus {
    guard(|| copy_out(&deref(cal, "calibration")?.inner.lambda_star_samples, out, len))
}

/// # Safety
/// `cal` must come from `explasso_calibrate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn explasso_calibration_free(cal: *mut ExplassoCalibration) {
    if !cal.is_null() {
        drop(Box::from_raw(cal));
    }
}

/// Fits the exp-Lasso at penalty `lambda`. `tol_kkt ≤ 0` selects the
/// default tolerance; `n_starts` random restarts are seeded by `seed`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn explasso_fit(
    ds: *const ExplassoDataset,
    model: *const ExplassoModel,
    lambda: f64,
    tol_kkt: f64,
    n_starts: usize,
    seed: u64,
    out: *mut *mut ExplassoFit,
) -> ExplassoStatus {
    guard(|| {
        let d = &deref(ds, "dataset")?.inner;
        let m = &deref(model, "model")?.inner;
        let mut cfg = FitConfig::with_lambda(lambda);
        if tol_kkt > 0.0 {
            cfg.tol_kkt = tol_kkt;
        }
        cfg.n_starts = n_starts.max(1);
        cfg.seed = seed;
        cfg.validate()?;
        let fit = fit_exp_lasso_at(d, m, &cfg, lambda)?;
        store(out, ExplassoFit { inner: fit })
    })
}

/// Number of coefficients, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_fit_len(fit: *const ExplassoFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.beta.len())
}

/// Copies β̂ into `out` (at least `len` entries).
///
/// # Safety
/// `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn explasso_fit_beta(fit: *const ExplassoFit, out: *mut f64, len: usize) -> ExplassoStatus {
    guard(|| copy_out(deref(fit, "fit")?.inner.beta.as_slice(), out, len))
}

/// σ̂, or NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_fit_sigma(fit: *const ExplassoFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.inner.sigma)
}

/// Objective value at the solution, or NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_fit_objective(fit: *const ExplassoFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.inner.objective)
}

/// KKT residual at the solution, or NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_fit_kkt_residual(fit: *const ExplassoFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.inner.kkt_residual)
}

/// 1 if the solver met its tolerances, 0 otherwise (or for a null handle).
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn explasso_fit_converged(fit: *const ExplassoFit) -> i32 {
    fit.as_ref().map_or(0, |f| f.inner.converged as i32)
}

/// # Safety
/// `fit` must come from `explasso_fit` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn explasso_fit_free(fit: *mut ExplassoFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
