//! C ABI over the propagation drivers.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a [`NispStatus`];
//! the message of the last failure on the calling thread is available
//! through [`nisp_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use reduced_nisp::cli::config::RunConfig;
use reduced_nisp::gpc::CoeffMatrix;
use reduced_nisp::nisp::{deterministic_init, reduced_nisp, relative_error, standard_nisp, NispSetup};
use reduced_nisp::problems::Problem;
use reduced_nisp::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NispStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Numerical = 4,
    NoConvergence = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NispMethod {
    Standard = 0,
    Reduced = 1,
}

/// Run configuration handle.
pub struct NispConfig {
    inner: RunConfig,
}

/// Converged propagation result handle.
pub struct NispResult {
    problem: Problem,
    coeffs: [CoeffMatrix; 2],
    iterations: usize,
    converged: bool,
    calls: [usize; 2],
    nodes: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> NispStatus {
    match e {
        Error::NoConvergence { .. } | Error::Divergence { .. } => NispStatus::NoConvergence,
        e if e.is_usage() => NispStatus::InvalidArgument,
        e if e.is_io() => NispStatus::Io,
        _ => NispStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), NispStatus>) -> NispStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NispStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            NispStatus::Panic
        }
    }
}

fn fail(e: Error) -> NispStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(name: &str) -> NispStatus {
    set_error(format!("{name} is null"));
    NispStatus::NullPointer
}

unsafe fn config_mut<'a>(cfg: *mut NispConfig) -> Result<&'a mut RunConfig, NispStatus> {
    cfg.as_mut().map(|c| &mut c.inner).ok_or_else(|| null("config"))
}

unsafe fn result_ref<'a>(res: *const NispResult) -> Result<&'a NispResult, NispStatus> {
    res.as_ref().ok_or_else(|| null("result"))
}

fn module_index(module: u32) -> Result<usize, NispStatus> {
    match module {
        1 | 2 => Ok(module as usize - 1),
        _ => {
            set_error(format!("module must be 1 or 2, got {module}"));
            Err(NispStatus::InvalidArgument)
        }
    }
}

/// Copies the last error message into `buf` as a NUL-terminated string and
/// returns the full message length in bytes, excluding the terminator.
/// Passing a null `buf` or zero `len` only queries the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn nisp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Default configuration: Poisson, `s1 = s2 = 3`, `p = 2`.
#[no_mangle]
pub extern "C" fn nisp_config_new() -> *mut NispConfig {
    Box::into_raw(Box::new(NispConfig {
        inner: RunConfig::default(),
    }))
}

/// Parses a TOML configuration.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn nisp_config_from_toml(text: *const c_char, out: *mut *mut NispConfig) -> NispStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(text).to_str().map_err(|e| fail(Error::Format(e.to_string())))?;
        let inner = RunConfig::from_toml(text).map_err(fail)?;
        inner.validate().map_err(fail)?;
        *out = Box::into_raw(Box::new(NispConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nisp_config_free(cfg: *mut NispConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets the expansion order and the quadrature level; `level = 0` uses `p`.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nisp_config_set_order(cfg: *mut NispConfig, p: u32, level: u32) -> NispStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        c.p = p as usize;
        c.q = (level > 0).then_some(level as usize);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nisp_config_set_dims(cfg: *mut NispConfig, s1: u32, s2: u32) -> NispStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        c.s1 = s1 as usize;
        c.s2 = s2 as usize;
        Ok(())
    })
}

/// Mesh size of the spatial discretization.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nisp_config_set_mesh(cfg: *mut NispConfig, m: u32) -> NispStatus {
    guard(|| {
        config_mut(cfg)?.m = Some(m as usize);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nisp_config_set_reduction(
    cfg: *mut NispConfig,
    eps_dim1: f64,
    eps_dim2: f64,
    eps_ord1: f64,
    eps_ord2: f64,
) -> NispStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        c.reduction.eps_dim = [eps_dim1, eps_dim2];
        c.reduction.eps_ord = [eps_ord1, eps_ord2];
        Ok(())
    })
}

/// Runs one propagation with `method` one of the [`NispMethod`] values.
/// A loop that stops at the iteration cap still
/// produces a result but returns `NoConvergence`.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn nisp_propagate(
    cfg: *const NispConfig,
    method: u32,
    out: *mut *mut NispResult,
) -> NispStatus {
    let mut unconverged = false;
    let status = guard(|| {
        let cfg = &cfg.as_ref().ok_or_else(|| null("config"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let method = match method {
            0 => NispMethod::Standard,
            1 => NispMethod::Reduced,
            _ => {
                set_error(format!("unknown method {method}"));
                return Err(NispStatus::InvalidArgument);
            }
        };
        cfg.validate().map_err(fail)?;
        let problem = cfg.build_problem(cfg.s1, cfg.s2).map_err(fail)?;
        let (m1, m2) = problem.modules();
        let setup = NispSetup::with_level(cfg.s1, cfg.s2, cfg.p, cfg.level(), cfg.rule).map_err(fail)?;
        let init = deterministic_init(m1, m2, &setup, &cfg.bgs_config()).map_err(fail)?;
        let rep = match method {
            NispMethod::Standard => standard_nisp(m1, m2, &setup, init, &cfg.stochastic_config()),
            NispMethod::Reduced => reduced_nisp(m1, m2, &setup, init, &cfg.stochastic_config(), &cfg.reduced_config()),
        }
        .map_err(fail)?;
        let (c1, c2) = rep.coefficients().map_err(fail)?;
        if !rep.converged {
            unconverged = true;
            set_error(format!("coefficient loop stopped after {} iterations", rep.iterations));
        }
        *out = Box::into_raw(Box::new(NispResult {
            coeffs: [c1, c2],
            iterations: rep.iterations,
            converged: rep.converged,
            calls: rep.module_calls,
            nodes: rep.rule_nodes,
            problem,
        }));
        Ok(())
    });
    if status == NispStatus::Ok && unconverged {
        NispStatus::NoConvergence
    } else {
        status
    }
}

/// # Safety
/// `res` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nisp_result_free(res: *mut NispResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Iterations, convergence flag, quadrature size and per-module call counts.
///
/// # Safety
/// `res` must be a live handle; each output pointer must be null or valid
/// for a write (`calls` for two values).
#[no_mangle]
pub unsafe extern "C" fn nisp_result_summary(
    res: *const NispResult,
    iterations: *mut usize,
    converged: *mut bool,
    nodes: *mut usize,
    calls: *mut usize,
) -> NispStatus {
    guard(|| {
        let r = result_ref(res)?;
        if !iterations.is_null() {
            *iterations = r.iterations;
        }
        if !converged.is_null() {
            *converged = r.converged;
        }
        if !nodes.is_null() {
            *nodes = r.nodes;
        }
        if !calls.is_null() {
            *calls = r.calls[0];
            *calls.add(1) = r.calls[1];
        }
        Ok(())
    })
}

/// Shape of a module's coefficient matrix: state size and number of terms.
///
/// # Safety
/// `res` must be a live handle, `rows` and `cols` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn nisp_result_shape(
    res: *const NispResult,
    module: u32,
    rows: *mut usize,
    cols: *mut usize,
) -> NispStatus {
    guard(|| {
        let r = result_ref(res)?;
        let c = &r.coeffs[module_index(module)?];
        if rows.is_null() || cols.is_null() {
            return Err(null("rows/cols"));
        }
        *rows = c.nrows();
        *cols = c.terms();
        Ok(())
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), NispStatus> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < src.len() {
        set_error(format!("buffer holds {len} values, {} needed", src.len()));
        return Err(NispStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies a module's coefficients in column-major order (one column per
/// basis term).
///
/// # Safety
/// `res` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn nisp_result_coefficients(
    res: *const NispResult,
    module: u32,
    buf: *mut f64,
    len: usize,
) -> NispStatus {
    guard(|| {
        let r = result_ref(res)?;
        copy_out(r.coeffs[module_index(module)?].data.as_slice(), buf, len)
    })
}

/// Mean and standard deviation of a module's state, `rows` values each.
///
/// # Safety
/// `res` must be a live handle; `mean` and `std` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn nisp_result_moments(
    res: *const NispResult,
    module: u32,
    mean: *mut f64,
    std: *mut f64,
    len: usize,
) -> NispStatus {
    guard(|| {
        let r = result_ref(res)?;
        let c = &r.coeffs[module_index(module)?];
        copy_out(c.mean().as_slice(), mean, len)?;
        copy_out(c.std_dev().as_slice(), std, len)
    })
}

/// Relative Gramian-weighted error of `res` against `reference`. The
/// reference may use a higher order; both must solve the same problem.
///
/// # Safety
/// Both handles must be live and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn nisp_result_relative_error(
    res: *const NispResult,
    reference: *const NispResult,
    out: *mut f64,
) -> NispStatus {
    guard(|| {
        let r = result_ref(res)?;
        let f = result_ref(reference)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (m1, m2) = r.problem.modules();
        let e = relative_error(
            [&r.coeffs[0], &r.coeffs[1]],
            [&f.coeffs[0], &f.coeffs[1]],
            [m1.gramian(), m2.gramian()],
        )
        .map_err(fail)?;
        *out = e;
        Ok(())
    })
}
