//! C ABI for certlab.
//!
//! Every fallible entry point returns a [`CertlabStatus`]; on failure the
//! message is available from [`certlab_last_error`] on the same thread.
//! Problems are passed around as opaque [`CertlabProblem`] handles created from
//! JSON and released with [`certlab_problem_free`]. Strings returned through
//! `char **` out-parameters are owned by the caller and must be released with
//! [`certlab_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use certlab::experiments::{self, ExperimentConfig, ProblemConfig};
use certlab::gaussian::lambda_n;
use certlab::linalg::DenseMatrix;
use certlab::losses::LossSpec;
use certlab::regularizers::RegularizerSpec;
use certlab::solvers::{solve_regularized, SolveOptions};
use certlab::Error;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidArgument = 4,
    Shape = 5,
    Numerical = 6,
    Unsupported = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

impl From<&Error> for CertlabStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => CertlabStatus::Config,
            Error::InvalidArgument(_) => CertlabStatus::InvalidArgument,
            Error::Shape { .. } => CertlabStatus::Shape,
            Error::Unsupported(_) => CertlabStatus::Unsupported,
            Error::Io(_) => CertlabStatus::Io,
            _ => CertlabStatus::Numerical,
        }
    }
}

/// Opaque handle to a validated problem description.
pub struct CertlabProblem {
    config: ProblemConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: CertlabStatus, msg: &str) -> CertlabStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), CertlabStatus>) -> CertlabStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CertlabStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(CertlabStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> CertlabStatus {
    fail(CertlabStatus::from(&e), &e.to_string())
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, CertlabStatus> {
    if s.is_null() {
        return Err(fail(CertlabStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(CertlabStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), CertlabStatus> {
    if out.is_null() {
        return Err(fail(CertlabStatus::NullPointer, "output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| fail(CertlabStatus::Io, "output contains a nul byte"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn problem_ref<'a>(p: *const CertlabProblem) -> Result<&'a CertlabProblem, CertlabStatus> {
    p.as_ref().ok_or_else(|| fail(CertlabStatus::NullPointer, "problem handle is null"))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], CertlabStatus> {
    if p.is_null() {
        return Err(fail(CertlabStatus::NullPointer, "array argument is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn to_json(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("values serialize")
}

/// Message for the most recent failure on this thread; empty after a success.
/// The pointer stays valid until the next certlab call on this thread.
#[no_mangle]
pub extern "C" fn certlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn certlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from a certlab `char **` output and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn certlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `E‖ε‖₂` for `ε ~ N(0, I_n)`.
#[no_mangle]
pub extern "C" fn certlab_lambda_n(n: usize) -> f64 {
    lambda_n(n)
}

/// Parses and validates a problem configuration (JSON).
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn certlab_problem_from_json(json: *const c_char, out: *mut *mut CertlabProblem) -> CertlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(CertlabStatus::NullPointer, "output pointer is null"));
        }
        let config = ProblemConfig::from_json(read_str(json)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CertlabProblem { config }));
        Ok(())
    })
}

/// Releases a problem handle. Null is ignored.
///
/// # Safety
/// `p` must come from [`certlab_problem_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn certlab_problem_free(p: *mut CertlabProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Parameter dimension of the problem, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn certlab_problem_dim(p: *const CertlabProblem) -> usize {
    p.as_ref().map_or(0, |p| p.config.loss.dim())
}

/// Solves the problem into `beta_out`; `len` must be at least the dimension.
///
/// # Safety
/// `p` must be a live handle and `beta_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn certlab_solve(p: *const CertlabProblem, beta_out: *mut f64, len: usize) -> CertlabStatus {
    guard(|| {
        let p = problem_ref(p)?;
        if beta_out.is_null() {
            return Err(fail(CertlabStatus::NullPointer, "beta_out is null"));
        }
        let dim = p.config.loss.dim();
        if len < dim {
            return Err(fail(CertlabStatus::BufferTooSmall, &format!("need {dim} doubles, got {len}")));
        }
        let value = experiments::run_solve(&p.config).map_err(lib_err)?;
        let beta: Vec<f64> = serde_json::from_value(value["beta"].clone()).expect("solve output carries beta");
        std::slice::from_raw_parts_mut(beta_out, dim).copy_from_slice(&beta);
        Ok(())
    })
}

/// Full solve report as JSON (`beta`, `objective`, `kkt_residual`, `status`, ...).
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn certlab_solve_json(p: *const CertlabProblem, out: *mut *mut c_char) -> CertlabStatus {
    guard(|| {
        let p = problem_ref(p)?;
        let value = experiments::run_solve(&p.config).map_err(lib_err)?;
        write_string(out, to_json(&value))
    })
}

/// Certificate reports at the anchor as JSON.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn certlab_certify_json(p: *const CertlabProblem, out: *mut *mut c_char) -> CertlabStatus {
    guard(|| {
        let p = problem_ref(p)?;
        let value = experiments::run_certify(&p.config).map_err(lib_err)?;
        write_string(out, to_json(&value))
    })
}

/// Monte Carlo Gaussian width at the anchor frame.
///
/// # Safety
/// `p` must be a live handle; `mean` and `std_error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn certlab_width(p: *const CertlabProblem, mean: *mut f64, std_error: *mut f64) -> CertlabStatus {
    guard(|| {
        let p = problem_ref(p)?;
        if mean.is_null() || std_error.is_null() {
            return Err(fail(CertlabStatus::NullPointer, "output pointer is null"));
        }
        let value = experiments::run_width(&p.config).map_err(lib_err)?;
        *mean = value["width"]["mean"].as_f64().unwrap_or(f64::NAN);
        *std_error = value["width"]["std_error"].as_f64().unwrap_or(f64::NAN);
        Ok(())
    })
}

/// GLM oracle bound report as JSON.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn certlab_glm_bound_json(p: *const CertlabProblem, out: *mut *mut c_char) -> CertlabStatus {
    guard(|| {
        let p = problem_ref(p)?;
        let value = experiments::run_glm_bound(&p.config).map_err(lib_err)?;
        write_string(out, to_json(&value))
    })
}

/// Lasso with the quadratic loss `‖Xβ − y‖²` on a row-major `n × p` design.
///
/// # Safety
/// `x` must hold `n·p` doubles, `y` and `beta_out` `n` and `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn certlab_lasso(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    lambda: f64,
    beta_out: *mut f64,
) -> CertlabStatus {
    guard(|| {
        let xs = read_slice(x, n * p)?;
        let ys = read_slice(y, n)?;
        if beta_out.is_null() {
            return Err(fail(CertlabStatus::NullPointer, "beta_out is null"));
        }
        let design = DenseMatrix::from_row_major(n, p, xs.to_vec()).map_err(lib_err)?;
        let loss = LossSpec::quadratic(design, ys.to_vec()).map_err(lib_err)?;
        let reg = RegularizerSpec::Lasso { lambda };
        reg.validate().map_err(lib_err)?;
        let sol = solve_regularized(&loss, &reg, &SolveOptions::default()).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(beta_out, p).copy_from_slice(&sol.beta);
        Ok(())
    })
}

/// Runs an experiment configuration and returns its trial table as CSV.
///
/// # Safety
/// `config_json` must be a nul-terminated string; `out_csv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn certlab_run_experiment_csv(config_json: *const c_char, out_csv: *mut *mut c_char) -> CertlabStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(read_str(config_json)?).map_err(lib_err)?;
        let outcome = experiments::run_experiment(&cfg).map_err(lib_err)?;
        let bytes = experiments::records_csv(outcome.records()).map_err(lib_err)?;
        write_string(out_csv, String::from_utf8(bytes).expect("csv is utf-8"))
    })
}
