//! C interface to `precis`.
//!
//! Matrices and fitted estimates are opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns a
//! [`PrecisStatus`]; on failure, [`precis_last_error`] describes the cause for
//! the calling thread. Matrices cross the boundary as row-major `double`
//! arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use precis::bagus::{default_init, fit_bagus, FitInput};
use precis::iro::{run_iro, IroConfig};
use precis::model::{contaminated_precision, sample_covariance};
use precis::{BagusHyperparams, Dataset, MeasurementErrorModel, PrecisError, PrecisionEstimate, SymMatrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisStatus {
    Ok = 0,
    InvalidInput = 1,
    DimensionMismatch = 2,
    NotPositiveDefinite = 3,
    /// EM hit its cap; the returned estimate is the last iterate.
    NonConvergence = 4,
    NumericalFailure = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Symmetric `d x d` matrix.
pub struct PrecisMatrix(SymMatrix);

/// A fitted precision matrix with its inclusion probabilities.
pub struct PrecisEstimate(PrecisionEstimate);

/// Spike-and-slab settings; see [`precis_hyperparams_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrecisHyperparams {
    pub v0: f64,
    pub v1: f64,
    pub eta: f64,
    pub tau: f64,
    pub bound: f64,
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub max_sweeps: usize,
}

impl From<&PrecisHyperparams> for BagusHyperparams {
    fn from(h: &PrecisHyperparams) -> Self {
        BagusHyperparams {
            v0: h.v0,
            v1: h.v1,
            eta: h.eta,
            tau: h.tau,
            spec_b: h.bound,
            em_tol: h.em_tol,
            em_max_iter: h.em_max_iter,
            max_sweeps: h.max_sweeps,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &PrecisError) -> PrecisStatus {
    match err {
        PrecisError::InvalidInput(_) => PrecisStatus::InvalidInput,
        PrecisError::DimensionMismatch(_) => PrecisStatus::DimensionMismatch,
        PrecisError::NotPositiveDefinite { .. } => PrecisStatus::NotPositiveDefinite,
        PrecisError::NonConvergence { .. } => PrecisStatus::NonConvergence,
        PrecisError::Iteration { source, .. } => status_of(source),
        e if e.is_numerical() => PrecisStatus::NumericalFailure,
        PrecisError::EmptyAverage | PrecisError::AllCellsFailed => PrecisStatus::NumericalFailure,
        _ => PrecisStatus::InvalidInput,
    }
}

fn fail(err: PrecisError) -> PrecisStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs `f`, converting panics into [`PrecisStatus::Panic`].
fn guard(f: impl FnOnce() -> PrecisStatus) -> PrecisStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            PrecisStatus::Panic
        }
    }
}

fn null_error(what: &str) -> PrecisStatus {
    set_error(format!("{what} is null"));
    PrecisStatus::NullPointer
}

/// # Safety
/// `data` must point to `len` readable doubles.
unsafe fn slice<'a>(data: *const f64, len: usize) -> &'a [f64] {
    std::slice::from_raw_parts(data, len)
}

fn write_out<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null before computing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message for the last failure on this thread, or null if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn precis_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `η = 0.5`, `τ = v0`, bound 10, tolerance 1e-4, 50 EM iterations, 200 sweeps.
#[no_mangle]
pub extern "C" fn precis_hyperparams_default(v0: f64, v1: f64) -> PrecisHyperparams {
    let h = BagusHyperparams::with_scales(v0, v1);
    PrecisHyperparams {
        v0: h.v0,
        v1: h.v1,
        eta: h.eta,
        tau: h.tau,
        bound: h.spec_b,
        em_tol: h.em_tol,
        em_max_iter: h.em_max_iter,
        max_sweeps: h.max_sweeps,
    }
}

/// Copies a row-major `dim x dim` array into a new matrix handle.
///
/// # Safety
/// `data` must point to `dim * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn precis_matrix_new(dim: usize, data: *const f64, out: *mut *mut PrecisMatrix) -> PrecisStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return null_error("data or out");
        }
        let entries = slice(data, dim * dim).to_vec();
        match SymMatrix::new(dim, entries) {
            Ok(m) => {
                write_out(out, PrecisMatrix(m));
                PrecisStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Dimension of `m`, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn precis_matrix_dim(m: *const PrecisMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// Copies the entries of `m` row-major into `buf`, which holds `len` doubles.
///
/// # Safety
/// `m` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn precis_matrix_copy(m: *const PrecisMatrix, buf: *mut f64, len: usize) -> PrecisStatus {
    guard(|| {
        let Some(m) = m.as_ref() else { return null_error("matrix") };
        if buf.is_null() {
            return null_error("buffer");
        }
        let src = m.0.as_slice();
        if len != src.len() {
            return fail(PrecisError::DimensionMismatch(format!("buffer holds {len} values, matrix has {}", src.len())));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(src);
        PrecisStatus::Ok
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn precis_matrix_free(m: *mut PrecisMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Precision of the contaminated variable given `omega_x` and diagonal error
/// variances `sigma_u` (length `dim`).
///
/// # Safety
/// `omega_x` must be a live handle, `sigma_u` must point to `dim` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn precis_contaminated_precision(
    omega_x: *const PrecisMatrix,
    sigma_u: *const f64,
    out: *mut *mut PrecisMatrix,
) -> PrecisStatus {
    guard(|| {
        let Some(omega) = omega_x.as_ref() else { return null_error("omega_x") };
        if sigma_u.is_null() || out.is_null() {
            return null_error("sigma_u or out");
        }
        let result = MeasurementErrorModel::new(slice(sigma_u, omega.0.dim()).to_vec())
            .and_then(|me| contaminated_precision(&omega.0, &me));
        match result {
            Ok(m) => {
                write_out(out, PrecisMatrix(m));
                PrecisStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

fn finish_fit(result: precis::Result<PrecisionEstimate>, out: *mut *mut PrecisEstimate) -> PrecisStatus {
    match result {
        Ok(est) => {
            write_out(out, PrecisEstimate(est));
            PrecisStatus::Ok
        }
        Err(PrecisError::NonConvergence { best, iterations, last_change }) => {
            set_error(format!("EM did not converge after {iterations} iterations (last max change {last_change:e})"));
            write_out(out, PrecisEstimate(*best));
            PrecisStatus::NonConvergence
        }
        Err(e) => fail(e),
    }
}

/// Fits the spike-and-slab model to a sample covariance `s` from `n`
/// observations. `init` may be null to start from the default.
///
/// On [`PrecisStatus::NonConvergence`] `*out` still receives the last iterate.
///
/// # Safety
/// `s` must be a live handle, `init` null or a live handle, `hp` readable
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn precis_fit_bagus(
    s: *const PrecisMatrix,
    n: usize,
    hp: *const PrecisHyperparams,
    init: *const PrecisMatrix,
    out: *mut *mut PrecisEstimate,
) -> PrecisStatus {
    guard(|| {
        let (Some(s), Some(hp)) = (s.as_ref(), hp.as_ref()) else { return null_error("s or hp") };
        if out.is_null() {
            return null_error("out");
        }
        let hp = BagusHyperparams::from(hp);
        let result = FitInput::new(s.0.clone(), n).and_then(|input| {
            let start = match init.as_ref() {
                Some(m) => m.0.clone(),
                None => default_init(&input.s)?,
            };
            fit_bagus(&input, &hp, &start)
        });
        finish_fit(result, out)
    })
}

/// Sample covariance (divisor `n`) of a row-major `n x d` data array.
///
/// # Safety
/// `data` must point to `n * d` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn precis_sample_covariance(
    data: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut PrecisMatrix,
) -> PrecisStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return null_error("data or out");
        }
        match Dataset::from_flat(n, d, slice(data, n * d).to_vec()).and_then(|x| sample_covariance(&x)) {
            Ok(s) => {
                write_out(out, PrecisMatrix(s));
                PrecisStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs the measurement-error correction on row-major `n x d` observations
/// `w` with error variances `sigma_u` (length `d`) and returns the averaged
/// estimate. Iterations whose EM hit its cap are kept, as in the library.
///
/// # Safety
/// `w` must point to `n * d` doubles, `sigma_u` to `d` doubles, `hp` must be
/// readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn precis_run_iro(
    w: *const f64,
    n: usize,
    d: usize,
    sigma_u: *const f64,
    hp: *const PrecisHyperparams,
    iterations: usize,
    burn_in_fraction: f64,
    seed: u64,
    out: *mut *mut PrecisEstimate,
) -> PrecisStatus {
    guard(|| {
        let Some(hp) = hp.as_ref() else { return null_error("hp") };
        if w.is_null() || sigma_u.is_null() || out.is_null() {
            return null_error("w, sigma_u or out");
        }
        let cfg = IroConfig {
            iterations,
            burn_in_fraction,
            seed,
            hp: BagusHyperparams::from(hp),
        };
        let result = Dataset::from_flat(n, d, slice(w, n * d).to_vec()).and_then(|data| {
            let me = MeasurementErrorModel::new(slice(sigma_u, d).to_vec())?;
            Ok(run_iro(&data, &me, &cfg)?.averaged)
        });
        finish_fit(result, out)
    })
}

/// New handle holding the estimated precision matrix, or null.
///
/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn precis_estimate_omega(e: *const PrecisEstimate) -> *mut PrecisMatrix {
    e.as_ref().map_or(ptr::null_mut(), |e| Box::into_raw(Box::new(PrecisMatrix(e.0.omega.clone()))))
}

/// New handle holding the slab inclusion probabilities, or null.
///
/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn precis_estimate_inclusion(e: *const PrecisEstimate) -> *mut PrecisMatrix {
    e.as_ref().map_or(ptr::null_mut(), |e| Box::into_raw(Box::new(PrecisMatrix(e.0.inclusion_prob.clone()))))
}

/// EM iterations used (for an averaged estimate, the number of iterates averaged).
///
/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn precis_estimate_iterations(e: *const PrecisEstimate) -> usize {
    e.as_ref().map_or(0, |e| e.0.iterations)
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn precis_estimate_converged(e: *const PrecisEstimate) -> bool {
    e.as_ref().is_some_and(|e| e.0.converged)
}

/// # Safety
/// `e` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn precis_estimate_free(e: *mut PrecisEstimate) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}
