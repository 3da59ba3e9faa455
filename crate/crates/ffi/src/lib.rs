//! C ABI for the covshift library.
//!
//! All handles are opaque pointers owned by this library; every
//! constructor has a matching `_free`. Functions return a [`CsStatus`];
//! on failure, [`cs_last_error`] returns a thread-local message valid
//! until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use covshift::dataset::RepeatedDataset;
use covshift::density_ratio::{
    fit_ratio, load_ratio, save_ratio, ClipPolicy, CopulaParams, RatioFitConfig, RatioModel,
};
use covshift::error::Error;
use covshift::regression::{
    fit_kre, fit_naive, fit_ure, load_fitted, save_fitted, EstimatorKind, FittedRegression,
    RegressionFitConfig, UreConfig, UreValidation,
};
use covshift::simgen::{gen_covariates, gen_responses, Case, Domain, Regime, ScenarioConfig};
use covshift::simplex::{
    build_approximant, error_certificate, CentralDifferenceOracle, HolderSpec,
    SimplicialApproximant,
};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    IoError = 3,
    ParseError = 4,
    TrainingDiverged = 5,
    OutOfDomain = 6,
    InternalError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CsStatus {
    match err {
        Error::InvalidConfig(_)
        | Error::Schema(_)
        | Error::InvalidSplit { .. }
        | Error::MissingResponses
        | Error::EmptyInput(_)
        | Error::LengthMismatch { .. }
        | Error::ShapeMismatch { .. }
        | Error::UnsupportedDimension { .. } => CsStatus::InvalidArgument,
        Error::Io(_) => CsStatus::IoError,
        Error::Parse { .. }
        | Error::ModelFormat { .. }
        | Error::EmptyDataset { .. }
        | Error::Preprocess(_) => CsStatus::ParseError,
        Error::DivergedTraining { .. } => CsStatus::TrainingDiverged,
        Error::OutsideDomain { .. } | Error::NotInSimplex { .. } => CsStatus::OutOfDomain,
        Error::OracleFailure { .. } => CsStatus::InternalError,
    }
}

fn fail(err: Error) -> CsStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

/// Runs a closure, translating panics into `InternalError`.
fn guarded<F: FnOnce() -> CsStatus>(f: F) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            CsStatus::InternalError
        }
    }
}

unsafe fn path_from(ptr: *const c_char) -> Result<PathBuf, CsStatus> {
    if ptr.is_null() {
        set_error("null path".into());
        return Err(CsStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8".into());
            Err(CsStatus::InvalidArgument)
        }
    }
}

macro_rules! nonnull {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(format!("null argument `{}`", stringify!($ptr)));
            return CsStatus::NullArgument;
        }
    };
}

/// Opaque repeated-measurements dataset.
pub struct CsDataset(RepeatedDataset);
/// Opaque density-ratio model.
pub struct CsRatioModel(RatioModel);
/// Opaque fitted regression estimator.
pub struct CsRegressionModel(FittedRegression);
/// Opaque simplicial approximant.
pub struct CsApproximant(SimplicialApproximant);

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn cs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

// ---------------------------------------------------------------- datasets

/// Reads a dataset CSV (`subject_id, obs_id, x_1..x_d[, y]`).
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_read_csv(
    path: *const c_char,
    out: *mut *mut CsDataset,
) -> CsStatus {
    guarded(|| {
        nonnull!(out);
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match covshift::dataio::read_dataset_csv(&path) {
            Ok((ds, _)) => {
                *out = Box::into_raw(Box::new(CsDataset(ds)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes a dataset CSV.
///
/// # Safety
/// `ds` must be a live dataset handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_write_csv(
    ds: *const CsDataset,
    path: *const c_char,
) -> CsStatus {
    guarded(|| {
        nonnull!(ds);
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match covshift::dataio::write_dataset_csv(&path, &(*ds).0, None) {
            Ok(()) => CsStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Draws a simulated dataset. `case`: 1 or 2; `regime`: 0 bounded,
/// 1 unbounded; `domain`: 0 source, 1 target; `with_responses` attaches
/// responses (source-law data only needs them).
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_simulate(
    case: u32,
    regime: u32,
    domain: u32,
    n_subjects: usize,
    m_per_subject: usize,
    seed: u64,
    with_responses: bool,
    out: *mut *mut CsDataset,
) -> CsStatus {
    guarded(|| {
        nonnull!(out);
        let case = match case {
            1 => Case::Case1,
            2 => Case::Case2,
            other => {
                set_error(format!("case must be 1 or 2, got {other}"));
                return CsStatus::InvalidArgument;
            }
        };
        let regime = match regime {
            0 => Regime::Bounded,
            1 => Regime::Unbounded,
            other => {
                set_error(format!("regime must be 0 or 1, got {other}"));
                return CsStatus::InvalidArgument;
            }
        };
        let domain = match domain {
            0 => Domain::Source,
            1 => Domain::Target,
            other => {
                set_error(format!("domain must be 0 or 1, got {other}"));
                return CsStatus::InvalidArgument;
            }
        };
        let cfg = ScenarioConfig::new(case, regime, n_subjects.max(1), n_subjects.max(1),
            m_per_subject.max(1), seed);
        let result = gen_covariates(domain, &cfg, n_subjects, m_per_subject).and_then(|cov| {
            if with_responses {
                gen_responses(&cov, &cfg)
            } else {
                Ok(cov)
            }
        });
        match result {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(CsDataset(ds)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Covariate dimension; 0 for a null handle.
///
/// # Safety
/// `ds` must be a live dataset handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_dim(ds: *const CsDataset) -> usize {
    if ds.is_null() {
        0
    } else {
        (*ds).0.d
    }
}

/// Number of subjects; 0 for a null handle.
///
/// # Safety
/// `ds` must be a live dataset handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_subjects(ds: *const CsDataset) -> usize {
    if ds.is_null() {
        0
    } else {
        (*ds).0.n_subjects()
    }
}

/// Total observation count; 0 for a null handle.
///
/// # Safety
/// `ds` must be a live dataset handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_observations(ds: *const CsDataset) -> usize {
    if ds.is_null() {
        0
    } else {
        (*ds).0.total_observations()
    }
}

/// # Safety
/// `ds` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_free(ds: *mut CsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// ------------------------------------------------------------ ratio models

/// Exact Gaussian-copula ratio. `clip <= 0` means no truncation.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_ratio_exact_copula(
    mu_p: f64,
    var_p: f64,
    mu_q: f64,
    var_q: f64,
    d: usize,
    clip: f64,
    out: *mut *mut CsRatioModel,
) -> CsStatus {
    guarded(|| {
        nonnull!(out);
        let params = CopulaParams {
            mu_p,
            var_p,
            mu_q,
            var_q,
            d,
        };
        let clip_level = (clip > 0.0).then_some(clip);
        match RatioModel::exact_copula(params, clip_level) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CsRatioModel(model)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Fits the ratio from source and target covariates by minimizing the
/// empirical ratio risk. `clip <= 0` trains unclipped; a positive `clip`
/// trains inside the truncated class at that level.
///
/// # Safety
/// `source` and `target` must be live dataset handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_ratio_fit(
    source: *const CsDataset,
    target: *const CsDataset,
    seed: u64,
    clip: f64,
    out: *mut *mut CsRatioModel,
) -> CsStatus {
    guarded(|| {
        nonnull!(source);
        nonnull!(target);
        nonnull!(out);
        let mut cfg = RatioFitConfig::default_with_seed(seed);
        if clip > 0.0 {
            cfg.clip = ClipPolicy::Fixed { xi: clip };
        }
        match fit_ratio(
            &(*source).0.covariates_only(),
            &(*target).0.covariates_only(),
            &cfg,
            None,
        ) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CsRatioModel(model)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Evaluates the ratio at a point of dimension `len`.
///
/// # Safety
/// `model` must be live; `x` must point to `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_ratio_evaluate(
    model: *const CsRatioModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> CsStatus {
    guarded(|| {
        nonnull!(model);
        nonnull!(x);
        nonnull!(out);
        let point = std::slice::from_raw_parts(x, len);
        match (*model).0.evaluate(point) {
            Ok(v) => {
                *out = v;
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be live; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cs_ratio_save(
    model: *const CsRatioModel,
    path: *const c_char,
) -> CsStatus {
    guarded(|| {
        nonnull!(model);
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match save_ratio(&path, &(*model).0) {
            Ok(()) => CsStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_ratio_load(
    path: *const c_char,
    out: *mut *mut CsRatioModel,
) -> CsStatus {
    guarded(|| {
        nonnull!(out);
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match load_ratio(&path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CsRatioModel(model)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cs_ratio_free(model: *mut CsRatioModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ------------------------------------------------------------- estimators

/// Naive estimator: unweighted fit on all source observations.
///
/// # Safety
/// `source` must be a live dataset handle with responses; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_fit_naive(
    source: *const CsDataset,
    seed: u64,
    out: *mut *mut CsRegressionModel,
) -> CsStatus {
    guarded(|| {
        nonnull!(source);
        nonnull!(out);
        let cfg = RegressionFitConfig::default_with_seed(seed);
        match fit_naive(&(*source).0, &cfg, None) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(CsRegressionModel(f)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Known-ratio estimator: ratio-weighted fit on the full source dataset.
///
/// # Safety
/// `source` and `ratio` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_fit_kre(
    source: *const CsDataset,
    ratio: *const CsRatioModel,
    seed: u64,
    out: *mut *mut CsRegressionModel,
) -> CsStatus {
    guarded(|| {
        nonnull!(source);
        nonnull!(ratio);
        nonnull!(out);
        let cfg = RegressionFitConfig::default_with_seed(seed);
        match fit_kre(&(*source).0, &(*ratio).0, &cfg, None) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(CsRegressionModel(f)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Unknown-ratio estimator: splits the source subjects, fits the ratio on
/// one half against the target covariates, then the weighted regression on
/// the other half. `ratio_clip <= 0` trains the ratio unclipped.
///
/// # Safety
/// `source` and `target` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_fit_ure(
    source: *const CsDataset,
    target: *const CsDataset,
    seed: u64,
    ratio_clip: f64,
    out: *mut *mut CsRegressionModel,
) -> CsStatus {
    guarded(|| {
        nonnull!(source);
        nonnull!(target);
        nonnull!(out);
        let mut cfg = UreConfig::default_with_seed(seed);
        if ratio_clip > 0.0 {
            cfg.ratio.clip = ClipPolicy::Fixed { xi: ratio_clip };
        }
        match fit_ure(
            &(*source).0,
            &(*target).0.covariates_only(),
            &cfg,
            UreValidation::none(),
        ) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(CsRegressionModel(f)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Deterministic forward pass of the fitted network.
///
/// # Safety
/// `model` must be live; `x` must point to `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_predict(
    model: *const CsRegressionModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> CsStatus {
    guarded(|| {
        nonnull!(model);
        nonnull!(x);
        nonnull!(out);
        let point = std::slice::from_raw_parts(x, len);
        match (*model).0.predict(point) {
            Ok(v) => {
                *out = v;
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Estimator kind: 0 naive, 1 known-ratio, 2 unknown-ratio;
/// `usize::MAX` for a null handle.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_kind(model: *const CsRegressionModel) -> usize {
    if model.is_null() {
        return usize::MAX;
    }
    match (*model).0.kind {
        EstimatorKind::Ne => 0,
        EstimatorKind::Kre => 1,
        EstimatorKind::Ure => 2,
    }
}

/// Persists the network plus its metadata sidecar.
///
/// # Safety
/// `model` must be live; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_save(
    model: *const CsRegressionModel,
    path: *const c_char,
) -> CsStatus {
    guarded(|| {
        nonnull!(model);
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match save_fitted(&path, &(*model).0) {
            Ok(()) => CsStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_load(
    path: *const c_char,
    out: *mut *mut CsRegressionModel,
) -> CsStatus {
    guarded(|| {
        nonnull!(out);
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match load_fitted(&path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CsRegressionModel(model)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_free(model: *mut CsRegressionModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ------------------------------------------------------------ approximant

/// Scalar target function supplied by the caller: receives `d` coordinates
/// and the user pointer, returns the function value.
pub type CsScalarFn = extern "C" fn(x: *const f64, d: usize, user: *mut c_void) -> f64;

/// Builds the simplicial partition-of-unity approximant of a callback
/// function on `[0,1]^d` at mesh resolution `n`, for the Hölder ball with
/// smoothness `zeta` and constant `b`. Derivatives are taken by central
/// finite differences, so `f` must be evaluable slightly outside the cube.
///
/// # Safety
/// `f` must be callable with the documented signature for the duration of
/// this call; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_approximant_build(
    f: CsScalarFn,
    user: *mut c_void,
    d: usize,
    n: usize,
    zeta: f64,
    b: f64,
    out: *mut *mut CsApproximant,
) -> CsStatus {
    guarded(|| {
        nonnull!(out);
        let spec = match HolderSpec::new(zeta, b) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let user_addr = user as usize;
        let call = move |x: &[f64]| f(x.as_ptr(), x.len(), user_addr as *mut c_void);
        let oracle = CentralDifferenceOracle::new(call, n);
        match build_approximant(&oracle, spec, n, d) {
            Ok(a) => {
                *out = Box::into_raw(Box::new(CsApproximant(a)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Evaluates the approximant at a point of dimension `len`.
///
/// # Safety
/// `approx` must be live; `x` must point to `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_approximant_evaluate(
    approx: *const CsApproximant,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> CsStatus {
    guarded(|| {
        nonnull!(approx);
        nonnull!(x);
        nonnull!(out);
        let point = std::slice::from_raw_parts(x, len);
        match (*approx).0.evaluate(point) {
            Ok(v) => {
                *out = v;
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// The certified sup-error bound `(d+1) B d^t N^(-zeta)`; NaN for invalid
/// smoothness parameters.
#[no_mangle]
pub extern "C" fn cs_error_certificate(d: usize, zeta: f64, b: f64, n: usize) -> f64 {
    match HolderSpec::new(zeta, b) {
        Ok(spec) => error_certificate(&spec, d, n),
        Err(_) => f64::NAN,
    }
}

/// # Safety
/// `approx` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cs_approximant_free(approx: *mut CsApproximant) {
    if !approx.is_null() {
        drop(Box::from_raw(approx));
    }
}
