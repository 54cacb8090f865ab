//! C ABI over the simulator.
//!
//! Handles are opaque. Every function returns an [`AvsimStatus`] (or a null
//! pointer / zero on failure) and records a message retrievable with
//! [`avsim_last_error`] on the calling thread. Strings returned to the
//! caller are freed with [`avsim_string_free`], byte buffers with
//! [`avsim_bytes_free`]. Panics never cross the boundary.

use avsim::sim::Simulator;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Opaque simulator handle.
pub struct AvsimSim {
    inner: Simulator,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvsimStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    /// Scenario-API error; the code is in [`avsim_last_error_code`].
    Api = 4,
    Snapshot = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<(CString, CString)>> = const { RefCell::new(None) };
}

fn set_error(code: &str, message: &str) {
    let clean = |s: &str| CString::new(s.replace('\0', " ")).unwrap();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some((clean(code), clean(message))));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard<T>(fallback: T, f: impl FnOnce() -> T) -> T {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error("panic", &msg);
            fallback
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, AvsimStatus> {
    if p.is_null() {
        set_error("null_argument", &format!("{name} is null"));
        return Err(AvsimStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|e| {
        set_error("invalid_utf8", &format!("{name}: {e}"));
        AvsimStatus::InvalidUtf8
    })
}

unsafe fn sim_arg<'a>(p: *mut AvsimSim) -> Result<&'a mut AvsimSim, AvsimStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null_argument", "sim is null");
        AvsimStatus::NullArgument
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn avsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn avsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |(_, m)| m.as_ptr()))
}

/// Machine-readable code of the last failed call on this thread, or null.
#[no_mangle]
pub extern "C" fn avsim_last_error_code() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |(c, _)| c.as_ptr()))
}

/// New simulator on an empty map. Null on failure.
#[no_mangle]
pub extern "C" fn avsim_sim_new(seed: u64) -> *mut AvsimSim {
    guard(ptr::null_mut(), || {
        let mut inner = Simulator::empty(seed);
        inner.default_pace = 0.0;
        Box::into_raw(Box::new(AvsimSim { inner }))
    })
}

/// Frees a handle; null is ignored.
///
/// # Safety
/// `sim` must come from [`avsim_sim_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn avsim_sim_free(sim: *mut AvsimSim) {
    guard((), || {
        if !sim.is_null() {
            drop(Box::from_raw(sim));
        }
    })
}

/// Executes a scenario-API call. `params_json` may be null. On success
/// `*out_json` receives the result JSON (free with
/// [`avsim_string_free`]); on failure it is set to null.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn avsim_sim_call(
    sim: *mut AvsimSim,
    method: *const c_char,
    params_json: *const c_char,
    out_json: *mut *mut c_char,
) -> AvsimStatus {
    guard(AvsimStatus::Panic, || {
        if out_json.is_null() {
            set_error("null_argument", "out_json is null");
            return AvsimStatus::NullArgument;
        }
        *out_json = ptr::null_mut();
        let sim = match sim_arg(sim) {
            Ok(s) => s,
            Err(e) => return e,
        };
        let method = match str_arg(method, "method") {
            Ok(s) => s,
            Err(e) => return e,
        };
        let params = if params_json.is_null() {
            serde_json::Value::Null
        } else {
            let text = match str_arg(params_json, "params_json") {
                Ok(s) => s,
                Err(e) => return e,
            };
            match serde_json::from_str(text) {
                Ok(v) => v,
                Err(e) => {
                    set_error("invalid_json", &e.to_string());
                    return AvsimStatus::InvalidJson;
                }
            }
        };
        match sim.inner.handle_call(method, &params) {
            Ok(v) => {
                *out_json = CString::new(v.to_string()).unwrap().into_raw();
                AvsimStatus::Ok
            }
            Err(e) => {
                set_error(&e.code, &e.message);
                AvsimStatus::Api
            }
        }
    })
}

/// Advances `ticks` steps unpaced.
///
/// # Safety
/// `sim` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn avsim_sim_step(sim: *mut AvsimSim, ticks: u64) -> AvsimStatus {
    guard(AvsimStatus::Panic, || match sim_arg(sim) {
        Ok(s) => {
            s.inner.advance(ticks, 0.0);
            AvsimStatus::Ok
        }
        Err(e) => e,
    })
}

/// Current tick, 0 for a null handle.
///
/// # Safety
/// `sim` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn avsim_sim_tick(sim: *const AvsimSim) -> u64 {
    guard(0, || sim.as_ref().map_or(0, |s| s.inner.world.tick))
}

/// Serializes the world. The buffer is freed with [`avsim_bytes_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn avsim_sim_snapshot(sim: *const AvsimSim, out: *mut *mut u8, out_len: *mut usize) -> AvsimStatus {
    guard(AvsimStatus::Panic, || {
        let Some(s) = sim.as_ref() else {
            set_error("null_argument", "sim is null");
            return AvsimStatus::NullArgument;
        };
        if out.is_null() || out_len.is_null() {
            set_error("null_argument", "output pointer is null");
            return AvsimStatus::NullArgument;
        }
        let bytes = avsim::world::snapshot(&s.inner.world).into_boxed_slice();
        *out_len = bytes.len();
        *out = Box::into_raw(bytes).cast();
        AvsimStatus::Ok
    })
}

/// Replaces the world with a snapshot.
///
/// # Safety
/// `data` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn avsim_sim_restore(sim: *mut AvsimSim, data: *const u8, len: usize) -> AvsimStatus {
    guard(AvsimStatus::Panic, || {
        let s = match sim_arg(sim) {
            Ok(s) => s,
            Err(e) => return e,
        };
        if data.is_null() {
            set_error("null_argument", "data is null");
            return AvsimStatus::NullArgument;
        }
        match avsim::world::restore(std::slice::from_raw_parts(data, len)) {
            Ok(w) => {
                s.inner.world = w;
                AvsimStatus::Ok
            }
            Err(e) => {
                set_error(e.code(), &e.to_string());
                AvsimStatus::Snapshot
            }
        }
    })
}

/// Frees a string returned by the library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn avsim_string_free(s: *mut c_char) {
    guard((), || {
        if !s.is_null() {
            drop(CString::from_raw(s));
        }
    })
}

/// Frees a buffer from [`avsim_sim_snapshot`]; null is ignored.
///
/// # Safety
/// `data`/`len` must be exactly as returned.
#[no_mangle]
pub unsafe extern "C" fn avsim_bytes_free(data: *mut u8, len: usize) {
    guard((), || {
        if !data.is_null() {
            drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
        }
    })
}
