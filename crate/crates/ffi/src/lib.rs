//! C ABI over the `qpvp` core.
//!
//! Objects cross the boundary as opaque handles created by `qpvp_*_new`
//! style constructors and released with the matching `*_free`. Every
//! fallible call returns a [`QpvpStatus`]; on failure the message is kept
//! per thread and can be read with [`qpvp_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qpvp::dominance::{crossing_u_star, Upper};
use qpvp::drivers::{simulate, DriverSpec, PathEnsemble, TimeGrid};
use qpvp::transforms::QuantileSpec;
use qpvp::valuation::{qpvp_price, ValuationRequest};
use qpvp::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpvpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    Unsupported = 4,
    Parse = 5,
    Panic = 6,
}

/// A quantile family with its parameters.
pub struct QpvpQuantile(QuantileSpec);

/// A driving process.
pub struct QpvpDriver(DriverSpec);

/// Simulated paths, stored row-major (one row per path).
pub struct QpvpEnsemble(PathEnsemble);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QpvpStatus {
    match e {
        _ if e.is_numeric() => QpvpStatus::Numeric,
        Error::Capability(_) => QpvpStatus::Unsupported,
        Error::Parse(_) => QpvpStatus::Parse,
        _ => QpvpStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (QpvpStatus, String)>) -> QpvpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QpvpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QpvpStatus::Panic
        }
    }
}

fn core(e: Error) -> (QpvpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (QpvpStatus, String) {
    (QpvpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), (QpvpStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (QpvpStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (QpvpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (QpvpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qpvp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qpvp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Tukey g-and-h quantile `A + (B/g)(e^{gX} − 1)e^{hX²/2}` (`h = 0` gives Tukey-g).
///
/// # Safety
/// `out` must be a valid pointer to writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn qpvp_quantile_tukey_gh(a: f64, b: f64, g: f64, h: f64, out: *mut *mut QpvpQuantile) -> QpvpStatus {
    guard(|| {
        let q = QuantileSpec::tukey_gh(a, b, g, h);
        q.validate(&[1.0]).map_err(|v| core(Error::Validation(v)))?;
        write(out, Box::into_raw(Box::new(QpvpQuantile(q))), "out")
    })
}

/// Gaussian quantile `m + √v X`.
///
/// # Safety
/// `out` must be a valid pointer to writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn qpvp_quantile_gaussian(m: f64, v: f64, out: *mut *mut QpvpQuantile) -> QpvpStatus {
    guard(|| {
        let q = QuantileSpec::gaussian(m, v);
        q.validate(&[1.0]).map_err(|v| core(Error::Validation(v)))?;
        write(out, Box::into_raw(Box::new(QpvpQuantile(q))), "out")
    })
}

/// Evaluate the quantile at level `u ∈ [0, 1]` and time `t`.
///
/// # Safety
/// `q` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qpvp_quantile_eval(q: *const QpvpQuantile, t: f64, u: f64, out: *mut f64) -> QpvpStatus {
    guard(|| {
        let q = borrow(q, "quantile")?;
        if !(0.0..=1.0).contains(&u) {
            return Err((QpvpStatus::InvalidArgument, format!("level must lie in [0, 1], got {u}")));
        }
        write(out, q.0.eval(t, u), "out")
    })
}

/// # Safety
/// `q` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qpvp_quantile_free(q: *mut QpvpQuantile) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Largest level where two quantiles cross at time `t`.
///
/// `u` receives the level (NaN if the curves coincide), `z` the common
/// value there, and `upper` 1 or 2 for the curve above the crossing, 0 if
/// they coincide.
///
/// # Safety
/// `q1`, `q2` must be live handles and the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn qpvp_crossing_u_star(
    q1: *const QpvpQuantile,
    q2: *const QpvpQuantile,
    t: f64,
    u: *mut f64,
    z: *mut f64,
    upper: *mut i32,
) -> QpvpStatus {
    guard(|| {
        let (a, b) = (borrow(q1, "q1")?, borrow(q2, "q2")?);
        let r = crossing_u_star(&a.0, &b.0, t).map_err(core)?;
        write(u, r.u.unwrap_or(f64::NAN), "u")?;
        write(z, r.z.unwrap_or(f64::NAN), "z")?;
        let side = match r.upper {
            Upper::First => 1,
            Upper::Second => 2,
            Upper::Equal => 0,
        };
        write(upper, side, "upper")
    })
}

/// Driver from its JSON description, e.g.
/// `{"kind":"ou","theta":0.5,"mu":0.3,"sigma":0.4,"y0":0.1}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qpvp_driver_from_json(json: *const c_char, out: *mut *mut QpvpDriver) -> QpvpStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let d: DriverSpec = serde_json::from_str(text).map_err(|e| (QpvpStatus::Parse, e.to_string()))?;
        d.validate(None).map_err(|v| core(Error::Validation(v)))?;
        write(out, Box::into_raw(Box::new(QpvpDriver(d))), "out")
    })
}

/// # Safety
/// `d` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qpvp_driver_free(d: *mut QpvpDriver) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Simulate `n_paths` paths observed at the `n_times` increasing positive
/// times in `times`.
///
/// # Safety
/// `driver` must be a live handle, `times` must point to `n_times` doubles
/// and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qpvp_simulate(
    driver: *const QpvpDriver,
    times: *const f64,
    n_times: usize,
    n_paths: usize,
    seed: u64,
    out: *mut *mut QpvpEnsemble,
) -> QpvpStatus {
    guard(|| {
        let d = borrow(driver, "driver")?;
        if times.is_null() {
            return Err(null("times"));
        }
        let ts = std::slice::from_raw_parts(times, n_times).to_vec();
        let grid = TimeGrid::new(ts).map_err(core)?;
        let ens = simulate(&d.0, &grid, n_paths, seed).map_err(core)?;
        write(out, Box::into_raw(Box::new(QpvpEnsemble(ens))), "out")
    })
}

/// # Safety
/// `e` must be a live handle and the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn qpvp_ensemble_shape(e: *const QpvpEnsemble, n_paths: *mut usize, n_times: *mut usize) -> QpvpStatus {
    guard(|| {
        let e = borrow(e, "ensemble")?;
        write(n_paths, e.0.n_paths(), "n_paths")?;
        write(n_times, e.0.grid.len(), "n_times")
    })
}

/// Copy the paths row-major into `buf`, which must hold
/// `n_paths * n_times` doubles.
///
/// # Safety
/// `e` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qpvp_ensemble_copy(e: *const QpvpEnsemble, buf: *mut f64, len: usize) -> QpvpStatus {
    guard(|| {
        let e = borrow(e, "ensemble")?;
        let need = e.0.n_paths() * e.0.grid.len();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < need {
            return Err((QpvpStatus::InvalidArgument, format!("buffer holds {len} values, need {need}")));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (row, dst) in e.0.paths.iter().zip(out.chunks_mut(e.0.grid.len())) {
            dst.copy_from_slice(row);
        }
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qpvp_ensemble_free(e: *mut QpvpEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Price a valuation request given as JSON (the `ValuationRequest` schema).
///
/// # Safety
/// `request_json` must be a NUL-terminated string; the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn qpvp_price_json(request_json: *const c_char, price: *mut f64, std_error: *mut f64) -> QpvpStatus {
    guard(|| {
        let text = c_str(request_json, "request_json")?;
        let req: ValuationRequest = serde_json::from_str(text).map_err(|e| (QpvpStatus::Parse, e.to_string()))?;
        let r = qpvp_price(&req).map_err(core)?;
        write(price, r.price, "price")?;
        write(std_error, r.std_error, "std_error")
    })
}
