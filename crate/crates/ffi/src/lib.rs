//! C ABI for `abandonq`.
//!
//! Every function returns an [`AqStatus`]; on failure the message is
//! available from [`aq_last_error_message`] on the same thread. Results are
//! written through out-pointers, which are left untouched on failure.
//! Objects are opaque handles released with their `_free` function; strings
//! returned by the library are released with [`aq_string_free`].
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the access the function
//! documents. Null is reported as [`AqStatus::NullPointer`], never
//! dereferenced. Panics are caught at the boundary and reported as
//! [`AqStatus::Panic`].
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use abandonq::Error;

mod diffusion;
mod run;

pub use diffusion::*;
pub use run::*;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Config = 3,
    Validation = 4,
    Stability = 5,
    NonIntegrable = 6,
    Quadrature = 7,
    Mismatch = 8,
    Io = 9,
    Json = 10,
    Panic = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

pub(crate) struct Failure {
    status: AqStatus,
    message: String,
}

impl Failure {
    pub(crate) fn new(status: AqStatus, message: impl Into<String>) -> Self {
        Failure { status, message: message.into() }
    }

    pub(crate) fn null(what: &str) -> Self {
        Failure::new(AqStatus::NullPointer, format!("{what} is null"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) => AqStatus::Config,
            Error::Validation(_) => AqStatus::Validation,
            Error::Stability(_) => AqStatus::Stability,
            Error::NonIntegrable(_) => AqStatus::NonIntegrable,
            Error::Quadrature(_) => AqStatus::Quadrature,
            Error::Mismatch(_) => AqStatus::Mismatch,
            Error::Io(_) | Error::Csv(_) => AqStatus::Io,
            Error::Json(_) => AqStatus::Json,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new(AqStatus::Json, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records its error message and converts panics.
pub(crate) fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> AqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AqStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {msg}"));
            AqStatus::Panic
        }
    }
}

pub(crate) unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::new(AqStatus::InvalidString, format!("{what} is not valid UTF-8")))
}

pub(crate) unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

pub(crate) fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::new(AqStatus::InvalidString, "output contains a NUL byte"))
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn aq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn aq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by the library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn aq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
