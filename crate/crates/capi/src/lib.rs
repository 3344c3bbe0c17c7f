//! C ABI for the best-approximation solver library.
//!
//! Instances are opaque handles created by the generator or loader
//! functions and released with `bap_instance_free`. Every fallible call
//! returns a `BapStatusCode`; the most recent error message for the
//! calling thread is available from `bap_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Duration;

use bap_core::drivers::{dykstra_solve, halpern_solve, SolveStatus, StepSchedule, StopRule};
use bap_core::error::BapError;
use bap_core::instances::{
    gen_ellipsoid_instance, gen_polyhedron_instance, load_instance, save_instance, Instance,
};
use bap_core::operators::{ExecMode, OperatorKind, SccrmControl};

/// Opaque problem instance.
pub struct BapInstance {
    inner: Instance,
}

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BapStatusCode {
    BapOk = 0,
    BapErrInvalidArgument = 1,
    BapErrIo = 2,
    BapErrSolver = 3,
    BapErrOracle = 4,
    BapErrNullPointer = 5,
    BapErrUtf8 = 6,
    BapErrBufferTooSmall = 7,
    BapErrPanic = 8,
}

/// Solving method selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BapMethod {
    BapMethodMap = 0,
    BapMethodCimmino = 1,
    BapMethod3pm = 2,
    BapMethodA3pm = 3,
    BapMethodSccrm = 4,
    BapMethodCrm = 5,
    BapMethodDykstra = 6,
}

/// Stepsize schedule selector; `harmonic_mu` is read only for the
/// harmonic family.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BapSchedule {
    BapScheduleInvK = 0,
    BapScheduleInvSqrtK = 1,
    BapScheduleHarmonic = 2,
}

/// Solve configuration. Nonpositive tolerances and zero limits disable the
/// corresponding stop; at least one of `max_iters` / `time_limit_s` must be
/// active.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BapSolveOptions {
    pub schedule: BapSchedule,
    pub harmonic_mu: f64,
    pub err_tol: f64,
    pub feas_tol: f64,
    pub max_iters: u64,
    pub time_limit_s: f64,
    pub parallel_projections: i32,
}

/// Terminal solve summary. `final_err` is NaN when the instance carries no
/// reference solution.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BapReport {
    pub iterations: u64,
    pub wall_time_s: f64,
    pub final_err: f64,
    pub final_delta: f64,
    /// 0 converged, 1 iteration limit, 2 time limit, 3 error.
    pub status: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn code_for(err: &BapError) -> BapStatusCode {
    match err {
        BapError::Io(_)
        | BapError::Json(_)
        | BapError::Schema(_)
        | BapError::SchemaVersion { .. } => BapStatusCode::BapErrIo,
        BapError::OracleFailure(_) | BapError::OracleDisagreement { .. } => {
            BapStatusCode::BapErrOracle
        }
        BapError::QpCycleLimit { .. } | BapError::Infeasible => BapStatusCode::BapErrSolver,
        _ => BapStatusCode::BapErrInvalidArgument,
    }
}

fn fail(err: BapError) -> BapStatusCode {
    let code = code_for(&err);
    set_error(&err.to_string());
    code
}

fn guard<F: FnOnce() -> BapStatusCode>(f: F) -> BapStatusCode {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            BapStatusCode::BapErrPanic
        }
    }
}

unsafe fn path_from(ptr: *const c_char) -> Result<PathBuf, BapStatusCode> {
    if ptr.is_null() {
        set_error("null path");
        return Err(BapStatusCode::BapErrNullPointer);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s).to_path_buf()),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(BapStatusCode::BapErrUtf8)
        }
    }
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn bap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Generate an ellipsoid-family instance. Returns null on error.
#[no_mangle]
pub extern "C" fn bap_gen_ellipsoid(m: usize, n: usize, theta: f64, seed: u64) -> *mut BapInstance {
    let mut out = std::ptr::null_mut();
    guard(|| match gen_ellipsoid_instance(m, n, theta, seed) {
        Ok(inner) => {
            out = Box::into_raw(Box::new(BapInstance { inner }));
            BapStatusCode::BapOk
        }
        Err(e) => fail(e),
    });
    out
}

/// Generate a polyhedron-family instance. Returns null on error.
#[no_mangle]
pub extern "C" fn bap_gen_polyhedron(
    m: usize,
    n: usize,
    k: usize,
    alpha_spread: f64,
    seed: u64,
) -> *mut BapInstance {
    let mut out = std::ptr::null_mut();
    guard(
        || match gen_polyhedron_instance(m, n, k, alpha_spread, seed) {
            Ok(inner) => {
                out = Box::into_raw(Box::new(BapInstance { inner }));
                BapStatusCode::BapOk
            }
            Err(e) => fail(e),
        },
    );
    out
}

/// Load an instance from a JSON file. Returns null on error.
///
/// # Safety
/// `path` must point to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bap_instance_load(path: *const c_char) -> *mut BapInstance {
    let mut out = std::ptr::null_mut();
    guard(|| {
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match load_instance(&path) {
            Ok(inner) => {
                out = Box::into_raw(Box::new(BapInstance { inner }));
                BapStatusCode::BapOk
            }
            Err(e) => fail(e),
        }
    });
    out
}

/// Save an instance to a JSON file.
///
/// # Safety
/// `instance` must be a live handle from this library; `path` must point
/// to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bap_instance_save(
    instance: *const BapInstance,
    path: *const c_char,
) -> BapStatusCode {
    guard(|| {
        let Some(instance) = instance.as_ref() else {
            set_error("null instance");
            return BapStatusCode::BapErrNullPointer;
        };
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match save_instance(&instance.inner, &path) {
            Ok(()) => BapStatusCode::BapOk,
            Err(e) => fail(e),
        }
    })
}

/// Release an instance handle. Null is ignored.
///
/// # Safety
/// `instance` must have been returned by this library and not freed yet.
#[no_mangle]
pub unsafe extern "C" fn bap_instance_free(instance: *mut BapInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Ambient dimension n, or 0 for null handles.
///
/// # Safety
/// `instance` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bap_instance_dim(instance: *const BapInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.inner.dim())
}

/// Number of sets m, or 0 for null handles.
///
/// # Safety
/// `instance` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bap_instance_num_sets(instance: *const BapInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.inner.num_sets())
}

/// Copy the anchor point into `out` (length `len`, must equal the
/// dimension).
///
/// # Safety
/// `instance` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bap_instance_anchor(
    instance: *const BapInstance,
    out: *mut f64,
    len: usize,
) -> BapStatusCode {
    guard(|| {
        let Some(instance) = instance.as_ref() else {
            set_error("null instance");
            return BapStatusCode::BapErrNullPointer;
        };
        if out.is_null() {
            set_error("null output buffer");
            return BapStatusCode::BapErrNullPointer;
        }
        if len != instance.inner.dim() {
            set_error("buffer length does not match the instance dimension");
            return BapStatusCode::BapErrBufferTooSmall;
        }
        let slice = std::slice::from_raw_parts_mut(out, len);
        slice.copy_from_slice(instance.inner.anchor.as_slice());
        BapStatusCode::BapOk
    })
}

/// Compute and store a certified reference solution (tolerance in
/// (0, 1e-6]).
///
/// # Safety
/// `instance` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bap_compute_reference(
    instance: *mut BapInstance,
    tol: f64,
) -> BapStatusCode {
    guard(|| {
        let Some(instance) = instance.as_mut() else {
            set_error("null instance");
            return BapStatusCode::BapErrNullPointer;
        };
        match instance.inner.ensure_reference(tol) {
            Ok(()) => BapStatusCode::BapOk,
            Err(e) => fail(e),
        }
    })
}

/// Copy the reference solution into `out`; fails when none is stored.
/// `certified_tol` may be null.
///
/// # Safety
/// `instance` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bap_instance_reference(
    instance: *const BapInstance,
    out: *mut f64,
    len: usize,
    certified_tol: *mut f64,
) -> BapStatusCode {
    guard(|| {
        let Some(instance) = instance.as_ref() else {
            set_error("null instance");
            return BapStatusCode::BapErrNullPointer;
        };
        let Some(reference) = instance.inner.reference.as_ref() else {
            set_error("instance has no reference solution");
            return BapStatusCode::BapErrInvalidArgument;
        };
        if out.is_null() {
            set_error("null output buffer");
            return BapStatusCode::BapErrNullPointer;
        }
        if len != instance.inner.dim() {
            set_error("buffer length does not match the instance dimension");
            return BapStatusCode::BapErrBufferTooSmall;
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(reference.point.as_slice());
        if !certified_tol.is_null() {
            *certified_tol = reference.certified_tol;
        }
        BapStatusCode::BapOk
    })
}

fn schedule_from(options: &BapSolveOptions) -> Result<StepSchedule, BapStatusCode> {
    Ok(match options.schedule {
        BapSchedule::BapScheduleInvK => StepSchedule::InvK,
        BapSchedule::BapScheduleInvSqrtK => StepSchedule::InvSqrtK,
        BapSchedule::BapScheduleHarmonic => {
            if !(options.harmonic_mu > 0.0 && options.harmonic_mu.is_finite()) {
                set_error("harmonic_mu must be positive");
                return Err(BapStatusCode::BapErrInvalidArgument);
            }
            StepSchedule::Harmonic {
                mu: options.harmonic_mu,
            }
        }
    })
}

/// Run one solve and fill `report`.
///
/// # Safety
/// `instance` must be a live handle; `options` and `report` must be valid
/// pointers.
#[no_mangle]
pub unsafe extern "C" fn bap_solve(
    instance: *const BapInstance,
    method: BapMethod,
    options: *const BapSolveOptions,
    report: *mut BapReport,
) -> BapStatusCode {
    guard(|| {
        let Some(instance) = instance.as_ref() else {
            set_error("null instance");
            return BapStatusCode::BapErrNullPointer;
        };
        let (Some(options), Some(report)) = (options.as_ref(), report.as_mut()) else {
            set_error("null options or report");
            return BapStatusCode::BapErrNullPointer;
        };
        let schedule = match schedule_from(options) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let err_tol = (options.err_tol > 0.0).then_some(options.err_tol);
        let feas_tol = (options.feas_tol > 0.0).then_some(options.feas_tol);
        let max_iters = (options.max_iters > 0).then_some(options.max_iters);
        let wall =
            (options.time_limit_s > 0.0).then(|| Duration::from_secs_f64(options.time_limit_s));
        let stop = match StopRule::new(err_tol, feas_tol, max_iters, wall) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let exec = if options.parallel_projections != 0 {
            ExecMode::Parallel
        } else {
            ExecMode::Serial
        };
        let kind = match method {
            BapMethod::BapMethodMap => Some(OperatorKind::Map),
            BapMethod::BapMethodCimmino => Some(OperatorKind::Cimmino),
            BapMethod::BapMethod3pm => Some(OperatorKind::ThreePm),
            BapMethod::BapMethodA3pm => Some(OperatorKind::A3pm),
            BapMethod::BapMethodSccrm => Some(OperatorKind::Sccrm(SccrmControl::Consecutive)),
            BapMethod::BapMethodCrm => Some(OperatorKind::CrmProduct),
            BapMethod::BapMethodDykstra => None,
        };
        let (solve_report, _) = match kind {
            Some(kind) => halpern_solve(&instance.inner, &kind, &schedule, &stop, exec),
            None => dykstra_solve(&instance.inner, &stop),
        };
        report.iterations = solve_report.iterations;
        report.wall_time_s = solve_report.wall_time_s;
        report.final_err = solve_report.final_err.unwrap_or(f64::NAN);
        report.final_delta = solve_report.final_delta;
        report.status = match solve_report.status {
            SolveStatus::Converged => 0,
            SolveStatus::IterLimit => 1,
            SolveStatus::TimeLimit => 2,
            SolveStatus::Error => 3,
        };
        if solve_report.status == SolveStatus::Error {
            set_error(&solve_report.error.unwrap_or_else(|| "solve failed".into()));
            return BapStatusCode::BapErrSolver;
        }
        BapStatusCode::BapOk
    })
}
