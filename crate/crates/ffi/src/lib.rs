//! C interface to the solver. Systems are opaque handles created from the
//! same JSON accepted by the CLI; every call returns a status code and
//! reports details through `wm_last_error`. Complex matrices cross the
//! boundary as interleaved `re, im` doubles in row-major order.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use weylmap::model::{validate, SystemConfig, ValidatedSystem};
use weylmap::reconstruct::{reconstruct, ReconstructOptions};
use weylmap::spectral::{RayEvaluator, RayHealth};
use weylmap::weyl::EngineOptions;
use weylmap::{CMat, Error};

/// Outcome of a call. Mirrors the CLI exit codes, with two extra cases for
/// contract violations at the boundary itself.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum wm_status {
    WM_OK = 0,
    /// A mathematical admissibility assumption failed.
    WM_ASSUMPTION = 1,
    /// Malformed input: bad JSON, bad grid, bad schedule.
    WM_FORMAT = 2,
    /// A solve or extrapolation did not settle.
    WM_NONCONVERGENCE = 3,
    /// A required pointer was null or a buffer too small.
    WM_NULL_ARGUMENT = 4,
    /// An internal invariant broke; the message names it.
    WM_INTERNAL = 5,
}

pub struct wm_system {
    sys: ValidatedSystem,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> wm_status {
    match err.exit_code() {
        1 => wm_status::WM_ASSUMPTION,
        2 => wm_status::WM_FORMAT,
        3 => wm_status::WM_NONCONVERGENCE,
        _ => wm_status::WM_INTERNAL,
    }
}

fn guarded(body: impl FnOnce() -> wm_status) -> wm_status {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unidentified panic".into());
            set_error(msg);
            wm_status::WM_INTERNAL
        }
    }
}

/// Copies the message of the most recent failure on this thread into `buf`
/// (NUL-terminated, truncated to `cap`). Returns the full message length.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (then only the
/// length is returned).
#[no_mangle]
pub unsafe extern "C" fn wm_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses and validates a system description; on success stores a handle in
/// `out`. The handle is immutable and safe to share across threads.
///
/// # Safety
/// `text` must be a NUL-terminated UTF-8 string; `out` must be a valid
/// pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn wm_system_load_json(
    text: *const c_char,
    out: *mut *mut wm_system,
) -> wm_status {
    if text.is_null() || out.is_null() {
        set_error("null argument to wm_system_load_json".into());
        return wm_status::WM_NULL_ARGUMENT;
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("system description is not valid UTF-8".into());
            return wm_status::WM_FORMAT;
        }
    };
    guarded(|| {
        let cfg = match SystemConfig::from_json(text) {
            Ok(cfg) => cfg,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        match validate(&cfg) {
            Ok((_, Some(sys))) => {
                *out = Box::into_raw(Box::new(wm_system { sys }));
                wm_status::WM_OK
            }
            Ok((report, None)) => {
                let failed = report.first_failure().expect("failed check");
                set_error(format!("{}: {}", failed.name, failed.detail));
                wm_status::WM_ASSUMPTION
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Releases a handle. Null is a no-op.
///
/// # Safety
/// `sys` must have come from `wm_system_load_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wm_system_free(sys: *mut wm_system) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Matrix dimension `n`, or 0 for a null handle.
///
/// # Safety
/// `sys` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wm_system_order(sys: *const wm_system) -> usize {
    if sys.is_null() {
        0
    } else {
        (*sys).sys.n
    }
}

/// Number of separation rays, or 0 for a null handle.
///
/// # Safety
/// `sys` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wm_system_ray_count(sys: *const wm_system) -> usize {
    if sys.is_null() {
        0
    } else {
        (*sys).sys.geometry.ray_count()
    }
}

unsafe fn write_matrix(m: &CMat, n: usize, out: *mut f64) {
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            *out.add(2 * (i * n + j)) = z.re;
            *out.add(2 * (i * n + j) + 1) = z.im;
        }
    }
}

/// Evaluates the potential `q(x)` into `out` (interleaved complex,
/// row-major, `2 n^2` doubles).
///
/// # Safety
/// `sys` must be a live handle; `out` must hold `2 n^2` doubles.
#[no_mangle]
pub unsafe extern "C" fn wm_potential_eval(
    sys: *const wm_system,
    x: f64,
    out: *mut f64,
) -> wm_status {
    if sys.is_null() || out.is_null() {
        set_error("null argument to wm_potential_eval".into());
        return wm_status::WM_NULL_ARGUMENT;
    }
    let sys = &(*sys).sys;
    if !(x > 0.0) {
        set_error(format!("abscissa must be positive, got {x}"));
        return wm_status::WM_FORMAT;
    }
    guarded(|| {
        write_matrix(&sys.q.eval(x), sys.n, out);
        wm_status::WM_OK
    })
}

/// Samples the spectral jump `P_hat(x, rho)` on one separation ray at the
/// given radius, into `out` (interleaved complex, row-major).
///
/// # Safety
/// `sys` must be a live handle; `out` must hold `2 n^2` doubles.
#[no_mangle]
pub unsafe extern "C" fn wm_jump_sample(
    sys: *const wm_system,
    ray: usize,
    radius: f64,
    x: f64,
    out: *mut f64,
) -> wm_status {
    if sys.is_null() || out.is_null() {
        set_error("null argument to wm_jump_sample".into());
        return wm_status::WM_NULL_ARGUMENT;
    }
    let sys = &(*sys).sys;
    if ray >= sys.geometry.ray_count() {
        set_error(format!(
            "ray {ray} out of range ({} rays)",
            sys.geometry.ray_count()
        ));
        return wm_status::WM_FORMAT;
    }
    if !(radius > 0.0) || !(x > 0.0) {
        set_error("radius and abscissa must be positive".into());
        return wm_status::WM_FORMAT;
    }
    guarded(|| {
        let ev = match RayEvaluator::new(sys, ray, EngineOptions::default()) {
            Ok(ev) => ev,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        let mut health = RayHealth::default();
        match ev.samples_at(radius, &[x], &mut health) {
            Ok(samples) => {
                write_matrix(&samples[0].p_hat, sys.n, out);
                wm_status::WM_OK
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Recovers the potential on a grid of abscissas by the truncated contour
/// integral. `out` receives one interleaved complex matrix per abscissa
/// (`nx * 2 n^2` doubles). Passing 0 for `n_schedule` selects the default
/// truncation radii 10, 20, 40, 80.
///
/// # Safety
/// `sys` must be a live handle; `xs` must hold `nx` doubles; `r_schedule`
/// must hold `n_schedule` doubles or be null when `n_schedule` is 0; `out`
/// must hold `nx * 2 n^2` doubles.
#[no_mangle]
pub unsafe extern "C" fn wm_reconstruct(
    sys: *const wm_system,
    xs: *const f64,
    nx: usize,
    r_schedule: *const f64,
    n_schedule: usize,
    out: *mut f64,
) -> wm_status {
    if sys.is_null() || xs.is_null() || out.is_null() || (r_schedule.is_null() && n_schedule > 0) {
        set_error("null argument to wm_reconstruct".into());
        return wm_status::WM_NULL_ARGUMENT;
    }
    let sys = &(*sys).sys;
    let xs = std::slice::from_raw_parts(xs, nx);
    if xs.is_empty() || xs.iter().any(|&v| !(v > 0.0)) || xs.windows(2).any(|w| w[1] <= w[0]) {
        set_error("abscissas must be positive and strictly increasing".into());
        return wm_status::WM_FORMAT;
    }
    let mut opts = ReconstructOptions::default();
    if n_schedule > 0 {
        opts.r_schedule = std::slice::from_raw_parts(r_schedule, n_schedule).to_vec();
    }
    guarded(|| match reconstruct(sys, xs, &opts) {
        Ok(rec) => {
            if !rec.converged {
                set_error("truncation sweep did not settle; reconstruction withheld".into());
                return wm_status::WM_NONCONVERGENCE;
            }
            for (j, m) in rec.estimate.iter().enumerate() {
                write_matrix(m, sys.n, out.add(j * 2 * sys.n * sys.n));
            }
            wm_status::WM_OK
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    })
}
