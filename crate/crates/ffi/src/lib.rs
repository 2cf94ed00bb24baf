//! C ABI over the `attvar` estimators.
//!
//! Conventions:
//! - Every fallible function returns an `AttvarStatus`; on failure,
//!   `attvar_last_error_message` describes the error on the calling thread.
//! - Objects come back through out-pointers as opaque handles and are
//!   released with the matching `*_free` function. Freeing NULL is a no-op.
//! - Strings handed out by the library are freed with `attvar_string_free`.
//! - Panics never cross the boundary; they surface as `ATTVAR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use attvar::nuisance::{OutcomeMethod, PropensityMethod, SdMethod};
use attvar::simulation::{run_monte_carlo, DgpSpec, McConfig, NuisanceMode};
use attvar::{estimate_all, Covariates, Dataset, EstimandKind, EstimateConfig, EstimateReport, ErrorCategory, NuisanceConfig, OracleNuisances, OutcomeKind};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttvarStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument is out of range (unknown estimand code, bad level, ...).
    InvalidArgument = 2,
    /// The data violate an input invariant.
    Validation = 3,
    /// A numerical routine failed (e.g. logistic fit did not converge).
    Numeric = 4,
    /// Text input (JSON) could not be parsed.
    Parse = 5,
    /// Internal panic caught at the boundary.
    Panic = 6,
}

/// Estimand codes accepted by the report accessors.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttvarEstimandCode {
    Patt = 0,
    Actt = 1,
    Swatt = 2,
    Catt = 3,
    Satt = 4,
    Matt = 5,
}

/// Opaque validated dataset.
pub struct AttvarDataset {
    inner: Dataset,
}

/// Opaque estimation report.
pub struct AttvarReport {
    inner: EstimateReport,
}

/// Estimation settings; obtain defaults from `attvar_estimate_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AttvarEstimateOptions {
    pub ci_level: f64,
    /// Cross-fitting folds; 1 disables cross-fitting.
    pub folds: u32,
    pub clip_eps: f64,
    /// Fold-assignment seed.
    pub seed: u64,
    /// Bit `k` requests the estimand with code `k`; 0 means all.
    pub estimand_mask: u32,
}

/// Caller-supplied nuisance arrays, one value per dataset row. Any pointer may be NULL,
/// in which case that nuisance is fitted.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AttvarOracle {
    pub pi: *const f64,
    pub mu0: *const f64,
    pub mu1: *const f64,
    pub sigma0: *const f64,
    pub sigma1: *const f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(AttvarStatus, String);

impl From<attvar::Error> for Failure {
    fn from(e: attvar::Error) -> Self {
        let status = match e.category() {
            ErrorCategory::Validation => AttvarStatus::Validation,
            ErrorCategory::Numeric => AttvarStatus::Numeric,
        };
        Failure(status, format!("{}: {e}", e.code()))
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AttvarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AttvarStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AttvarStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AttvarStatus::NullPointer, format!("`{what}` is NULL"))
}

/// # Safety
/// `p` must be NULL or valid for `len` reads.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn opt_vec(p: *const f64, len: usize) -> Option<Vec<f64>> {
    (!p.is_null()).then(|| std::slice::from_raw_parts(p, len).to_vec())
}

fn kind_from_code(code: u32) -> Result<EstimandKind, Failure> {
    EstimandKind::from_code(code).ok_or_else(|| Failure(AttvarStatus::InvalidArgument, format!("unknown estimand code {code}")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(AttvarStatus::Panic, "interior NUL in output".into()))
}

/// Message for the most recent failure on this thread, or "" after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn attvar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a dataset from `n` outcomes, `n` treatment indicators (0 or 1)
/// and an `n x d` row-major covariate matrix (may be NULL when `d == 0`).
///
/// # Safety
/// Pointers must be valid for the stated number of reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn attvar_dataset_new(
    y: *const f64,
    a: *const f64,
    x_row_major: *const f64,
    n: usize,
    d: usize,
    binary_outcome: bool,
    out: *mut *mut AttvarDataset,
) -> AttvarStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let y = slice(y, n, "y")?;
        let a = slice(a, n, "a")?;
        let cells = n.checked_mul(d).ok_or_else(|| Failure(AttvarStatus::InvalidArgument, "n * d overflows".into()))?;
        let x = slice(x_row_major, cells, "x_row_major")?;
        let kind = if binary_outcome { OutcomeKind::Binary } else { OutcomeKind::Continuous };
        let x = Covariates::from_row_major(n, d, x)?;
        let ds = attvar::validate(Dataset::new(y.to_vec(), a.to_vec(), x, kind)?)?;
        *out = Box::into_raw(Box::new(AttvarDataset { inner: ds }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a handle from `attvar_dataset_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn attvar_dataset_free(ds: *mut AttvarDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn attvar_dataset_rows(ds: *const AttvarDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.n())
}

#[no_mangle]
pub extern "C" fn attvar_estimate_options_default() -> AttvarEstimateOptions {
    let n = NuisanceConfig::default();
    AttvarEstimateOptions {
        ci_level: 0.95,
        folds: n.folds as u32,
        clip_eps: n.clip_eps,
        seed: n.seed,
        estimand_mask: 0,
    }
}

/// Runs the full estimation. `options` and `oracle` may be NULL.
///
/// # Safety
/// `ds` must be a live handle; non-NULL oracle arrays must hold as many
/// values as the dataset has rows; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn attvar_estimate(
    ds: *const AttvarDataset,
    options: *const AttvarEstimateOptions,
    oracle: *const AttvarOracle,
    out: *mut *mut AttvarReport,
) -> AttvarStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.inner;
        let opts = options.as_ref().copied().unwrap_or_else(|| attvar_estimate_options_default());
        if !(opts.ci_level > 0.0 && opts.ci_level < 1.0) {
            return Err(Failure(AttvarStatus::InvalidArgument, format!("ci_level {} outside (0, 1)", opts.ci_level)));
        }
        let estimands: Vec<EstimandKind> = if opts.estimand_mask == 0 {
            EstimandKind::ALL.to_vec()
        } else {
            if opts.estimand_mask >> EstimandKind::ALL.len() != 0 {
                return Err(Failure(AttvarStatus::InvalidArgument, format!("estimand_mask {:#x} has unknown bits", opts.estimand_mask)));
            }
            EstimandKind::ALL.into_iter().filter(|k| opts.estimand_mask & (1 << k.code()) != 0).collect()
        };

        let n = ds.n();
        let oracle = oracle.as_ref().map(|o| OracleNuisances {
            pi: opt_vec(o.pi, n),
            mu0: opt_vec(o.mu0, n),
            mu1: opt_vec(o.mu1, n),
            sigma0: opt_vec(o.sigma0, n),
            sigma1: opt_vec(o.sigma1, n),
        });
        let mut nuisance = NuisanceConfig {
            folds: opts.folds as usize,
            clip_eps: opts.clip_eps,
            seed: opts.seed,
            ..NuisanceConfig::default()
        };
        if let Some(o) = &oracle {
            if o.pi.is_some() {
                nuisance.propensity_method = PropensityMethod::OracleSupplied;
            }
            if o.mu0.is_some() {
                nuisance.outcome_method = OutcomeMethod::OracleSupplied;
            }
            if o.sigma0.is_some() && o.sigma1.is_some() {
                nuisance.sd_method = SdMethod::OracleSupplied;
            }
        }
        let config = EstimateConfig {
            nuisance,
            ci_level: opts.ci_level,
            estimands,
        };
        let report = estimate_all(ds, &config, oracle.as_ref())?;
        *out = Box::into_raw(Box::new(AttvarReport { inner: report }));
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn attvar_report_free(report: *mut AttvarReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

unsafe fn report_ref<'a>(report: *const AttvarReport) -> Result<&'a EstimateReport, Failure> {
    report.as_ref().map(|r| &r.inner).ok_or_else(|| null("report"))
}

/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn attvar_report_psi_hat(report: *const AttvarReport, out: *mut f64) -> AttvarStatus {
    guard(|| {
        let r = report_ref(report)?;
        *out.as_mut().ok_or_else(|| null("out"))? = r.psi_hat;
        Ok(())
    })
}

/// Variance used for inference on the estimand `kind` (an `AttvarEstimandCode`).
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn attvar_report_variance(report: *const AttvarReport, kind: u32, out: *mut f64) -> AttvarStatus {
    guard(|| {
        let r = report_ref(report)?;
        let k = kind_from_code(kind)?;
        let v = r
            .variance(k)
            .ok_or_else(|| Failure(AttvarStatus::InvalidArgument, format!("estimand `{k}` was not requested")))?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and both out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn attvar_report_ci(report: *const AttvarReport, kind: u32, lower: *mut f64, upper: *mut f64) -> AttvarStatus {
    guard(|| {
        let r = report_ref(report)?;
        let k = kind_from_code(kind)?;
        let e = r
            .get(k)
            .ok_or_else(|| Failure(AttvarStatus::InvalidArgument, format!("estimand `{k}` was not requested")))?;
        let (lo, hi) = (lower.as_mut().ok_or_else(|| null("lower"))?, upper.as_mut().ok_or_else(|| null("upper"))?);
        *lo = e.ci_lower;
        *hi = e.ci_upper;
        Ok(())
    })
}

/// The report as JSON; free the string with `attvar_string_free`.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn attvar_report_to_json(report: *const AttvarReport, out: *mut *mut c_char) -> AttvarStatus {
    guard(|| {
        let r = report_ref(report)?;
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        *slot = into_c_string(r.to_json())?;
        Ok(())
    })
}

/// Runs a Monte Carlo study for a JSON data-generating spec and returns
/// the report as JSON. Fitted nuisances unless `oracle_nuisances`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn attvar_simulate_json(
    spec_json: *const c_char,
    n: usize,
    reps: usize,
    seed: u64,
    oracle_nuisances: bool,
    out: *mut *mut c_char,
) -> AttvarStatus {
    guard(|| {
        let slot = out.as_mut().ok_or_else(|| null("out"))?;
        *slot = ptr::null_mut();
        if spec_json.is_null() {
            return Err(null("spec_json"));
        }
        let text = CStr::from_ptr(spec_json)
            .to_str()
            .map_err(|_| Failure(AttvarStatus::Parse, "spec is not UTF-8".into()))?;
        let spec = DgpSpec::from_json(text).map_err(|e| Failure(AttvarStatus::Parse, e.to_string()))?;
        let cfg = McConfig {
            nuisance: if oracle_nuisances {
                NuisanceMode::Oracle
            } else {
                NuisanceMode::Fitted(NuisanceConfig::default())
            },
            ..McConfig::new(n, reps, seed)
        };
        let report = run_monte_carlo(&spec, &cfg)?;
        *slot = into_c_string(report.to_json())?;
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn attvar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
