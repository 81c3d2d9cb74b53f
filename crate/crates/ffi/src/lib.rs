//! C ABI over the `plnn` verifier.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! style constructors and released with the matching `*_free`. Every fallible
//! call returns a [`PlnnError`] code; the message of the last failure on the
//! calling thread is available from [`plnn_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::time::Duration;

use plnn::canon::{canonicalize, VerificationProblem};
use plnn::io::{load_network, network_from_json, property_from_json};
use plnn::model::{forward_eval, Network};
use plnn::runner::{run_problem, Method, RunConfig, RunRecord, Status};

/// Return code of every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlnnError {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInput = 4,
    Io = 5,
    BufferTooSmall = 6,
    NotAvailable = 7,
    Panic = 8,
}

/// Verdict of a verification run; values match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlnnVerdict {
    Unsat = 0,
    Sat = 1,
    Timeout = 2,
    Error = 3,
}

impl From<Status> for PlnnVerdict {
    fn from(s: Status) -> Self {
        match s {
            Status::Unsat => PlnnVerdict::Unsat,
            Status::Sat => PlnnVerdict::Sat,
            Status::Timeout => PlnnVerdict::Timeout,
            Status::Error => PlnnVerdict::Error,
        }
    }
}

/// A validated network.
pub struct PlnnNetwork(Network);

/// A network with a property and an input box, in canonical form.
pub struct PlnnProblem(VerificationProblem);

/// Outcome of [`plnn_verify`].
pub struct PlnnResult(RunRecord);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(code: PlnnError, msg: impl Into<String>) -> PlnnError {
    set_error(msg);
    code
}

fn error_code(err: &plnn::Error) -> PlnnError {
    match err {
        plnn::Error::Parse(_) | plnn::Error::UnsupportedFormat(_) => PlnnError::Parse,
        plnn::Error::Io(_) => PlnnError::Io,
        _ => PlnnError::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> PlnnError) -> PlnnError {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(PlnnError::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, PlnnError> {
    if p.is_null() {
        return Err(fail(PlnnError::NullPointer, format!("{what} is null")));
    }
    // SAFETY: the caller passes a NUL-terminated string valid for this call.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(PlnnError::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn store<T>(out: *mut *mut T, value: T) -> PlnnError {
    // SAFETY: checked non-null by callers; writes one pointer.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    PlnnError::Ok
}

/// Message of the last error on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn plnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn plnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a `plnn-v1` network from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn plnn_network_from_json(json: *const c_char, out: *mut *mut PlnnNetwork) -> PlnnError {
    guard(|| {
        if out.is_null() {
            return fail(PlnnError::NullPointer, "out is null");
        }
        let text = match unsafe { str_arg(json, "json") } {
            Ok(t) => t,
            Err(code) => return code,
        };
        match network_from_json(text) {
            Ok(net) => store(out, PlnnNetwork(net)),
            Err(e) => fail(error_code(&e), e.to_string()),
        }
    })
}

/// Loads a `plnn-v1` network file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn plnn_network_load(path: *const c_char, out: *mut *mut PlnnNetwork) -> PlnnError {
    guard(|| {
        if out.is_null() {
            return fail(PlnnError::NullPointer, "out is null");
        }
        let path = match unsafe { str_arg(path, "path") } {
            Ok(t) => t,
            Err(code) => return code,
        };
        match load_network(Path::new(path)) {
            Ok(net) => store(out, PlnnNetwork(net)),
            Err(e) => fail(error_code(&e), format!("{path}: {e}")),
        }
    })
}

/// # Safety
/// `net` must come from a network constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn plnn_network_free(net: *mut PlnnNetwork) {
    if !net.is_null() {
        drop(unsafe { Box::from_raw(net) });
    }
}

/// Number of inputs, or 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn plnn_network_input_size(net: *const PlnnNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.0.input_size)
}

/// Number of outputs, or 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn plnn_network_output_size(net: *const PlnnNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.0.output_width())
}

/// Evaluates the network at `x` (length `x_len`) into `out` (length `out_len`).
///
/// # Safety
/// `x` and `out` must point to arrays of the given lengths.
#[no_mangle]
pub unsafe extern "C" fn plnn_network_eval(
    net: *const PlnnNetwork,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> PlnnError {
    guard(|| {
        let Some(net) = (unsafe { net.as_ref() }) else {
            return fail(PlnnError::NullPointer, "net is null");
        };
        if x.is_null() || out.is_null() {
            return fail(PlnnError::NullPointer, "buffer is null");
        }
        let input = unsafe { std::slice::from_raw_parts(x, x_len) };
        let y = match forward_eval(&net.0, input) {
            Ok(y) => y,
            Err(e) => return fail(error_code(&e), e.to_string()),
        };
        if out_len < y.len() {
            return fail(PlnnError::BufferTooSmall, format!("need {} outputs, buffer holds {out_len}", y.len()));
        }
        unsafe { std::slice::from_raw_parts_mut(out, y.len()) }.copy_from_slice(&y);
        PlnnError::Ok
    })
}

/// Builds a canonical problem from a network and property JSON text
/// (`{"input_lb":..,"input_ub":..,"property":..}`).
///
/// # Safety
/// `net` must be a live handle, `property_json` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn plnn_problem_new(
    net: *const PlnnNetwork,
    property_json: *const c_char,
    out: *mut *mut PlnnProblem,
) -> PlnnError {
    guard(|| {
        let Some(net) = (unsafe { net.as_ref() }) else {
            return fail(PlnnError::NullPointer, "net is null");
        };
        if out.is_null() {
            return fail(PlnnError::NullPointer, "out is null");
        }
        let text = match unsafe { str_arg(property_json, "property_json") } {
            Ok(t) => t,
            Err(code) => return code,
        };
        let problem = property_from_json(text).and_then(|(prop, domain)| canonicalize(&net.0, &prop, &domain));
        match problem {
            Ok(p) => store(out, PlnnProblem(p)),
            Err(e) => fail(error_code(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `problem` must come from [`plnn_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn plnn_problem_free(problem: *mut PlnnProblem) {
    if !problem.is_null() {
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Runs `method` (e.g. `"babsb"`, `"mip-planet-opt"`) on the problem.
/// A negative `timeout_s` means no limit.
///
/// # Safety
/// `problem` must be a live handle, `method` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn plnn_verify(
    problem: *const PlnnProblem,
    method: *const c_char,
    timeout_s: f64,
    seed: u64,
    out: *mut *mut PlnnResult,
) -> PlnnError {
    guard(|| {
        let Some(problem) = (unsafe { problem.as_ref() }) else {
            return fail(PlnnError::NullPointer, "problem is null");
        };
        if out.is_null() {
            return fail(PlnnError::NullPointer, "out is null");
        }
        let method: Method = match unsafe { str_arg(method, "method") }.map(str::parse) {
            Ok(Ok(m)) => m,
            Ok(Err(e)) => return fail(PlnnError::InvalidInput, e.to_string()),
            Err(code) => return code,
        };
        let timeout = if timeout_s.is_nan() {
            return fail(PlnnError::InvalidInput, "timeout is NaN");
        } else if timeout_s < 0.0 {
            None
        } else {
            Some(Duration::from_secs_f64(timeout_s.min(1e9)))
        };
        let config = RunConfig { timeout, seed, ..RunConfig::default() };
        store(out, PlnnResult(run_problem(&problem.0, "ffi", method, &config)))
    })
}

/// # Safety
/// `result` must come from [`plnn_verify`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn plnn_result_free(result: *mut PlnnResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}

/// Verdict of a result; `PLNN_VERDICT_ERROR` for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn plnn_result_verdict(result: *const PlnnResult) -> PlnnVerdict {
    unsafe { result.as_ref() }.map_or(PlnnVerdict::Error, |r| r.0.status.into())
}

/// Number of subdomains or MIP nodes explored.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn plnn_result_nodes(result: *const PlnnResult) -> usize {
    unsafe { result.as_ref() }.map_or(0, |r| r.0.nodes)
}

/// Margin of an UNSAT result.
///
/// # Safety
/// `result` must be a live handle and `margin` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn plnn_result_margin(result: *const PlnnResult, margin: *mut f64) -> PlnnError {
    guard(|| {
        let Some(r) = (unsafe { result.as_ref() }) else {
            return fail(PlnnError::NullPointer, "result is null");
        };
        if margin.is_null() {
            return fail(PlnnError::NullPointer, "margin is null");
        }
        match r.0.margin {
            Some(m) => {
                unsafe { *margin = m };
                PlnnError::Ok
            }
            None => fail(PlnnError::NotAvailable, "result has no margin"),
        }
    })
}

/// Copies the counterexample of a SAT result into `buf`. `len` receives the
/// length of the counterexample even when the buffer is too small.
///
/// # Safety
/// `result` must be a live handle, `buf` an array of `buf_len` doubles (may be
/// NULL when `buf_len` is 0) and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn plnn_result_counterexample(
    result: *const PlnnResult,
    buf: *mut f64,
    buf_len: usize,
    len: *mut usize,
) -> PlnnError {
    guard(|| {
        let Some(r) = (unsafe { result.as_ref() }) else {
            return fail(PlnnError::NullPointer, "result is null");
        };
        if len.is_null() {
            return fail(PlnnError::NullPointer, "len is null");
        }
        let Some(x) = &r.0.counterexample else {
            return fail(PlnnError::NotAvailable, "result has no counterexample");
        };
        unsafe { *len = x.len() };
        if buf_len < x.len() || buf.is_null() {
            return fail(PlnnError::BufferTooSmall, format!("need {} values", x.len()));
        }
        unsafe { std::slice::from_raw_parts_mut(buf, x.len()) }.copy_from_slice(x);
        PlnnError::Ok
    })
}

/// The result as JSON text. Release with [`plnn_string_free`].
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn plnn_result_to_json(result: *const PlnnResult) -> *mut c_char {
    let Some(r) = (unsafe { result.as_ref() }) else {
        set_error("result is null");
        return ptr::null_mut();
    };
    match serde_json::to_string(&r.0.result_file()).ok().and_then(|s| CString::new(s).ok()) {
        Some(s) => s.into_raw(),
        None => {
            set_error("result serialization failed");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must come from a `plnn_*` function returning an owned string.
#[no_mangle]
pub unsafe extern "C" fn plnn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
