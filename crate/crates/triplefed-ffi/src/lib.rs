//! C interface to the engine.
//!
//! The surface is an opaque [`TfdEngine`] handle wrapping an in-process
//! cluster, plus status-code functions to load triples, answer queries,
//! apply updates, and read metrics. Strings returned through out-params
//! are NUL-terminated, owned by the caller, and must be released with
//! [`tfd_string_free`]. Failures return a status code and leave a
//! message readable via [`tfd_last_error`].
//!
//! A handle is single-threaded: calls on the same engine must not
//! overlap. Different engines are independent. Error messages are
//! thread-local, so read them on the thread that made the failing call.
//!
//! The matching declarations live in `include/triplefed.h`, regenerated
//! by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use triplefed::config::{Config, TransportKind};
use triplefed::master::Cluster;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfdStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArg = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// The engine rejected the call; `tfd_last_error` has the message.
    Runtime = 3,
}

/// Opaque engine handle: a master plus its worker threads, all inside
/// the calling process.
pub struct TfdEngine {
    cluster: Option<Cluster>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_err(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn runtime_err(e: impl std::fmt::Display) -> TfdStatus {
    set_err(&e.to_string());
    TfdStatus::Runtime
}

/// Runs `f` with panics confined to this side of the boundary.
fn guarded(f: impl FnOnce() -> TfdStatus) -> TfdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_err("internal panic");
            TfdStatus::Runtime
        }
    }
}

unsafe fn arg_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, TfdStatus> {
    if ptr.is_null() {
        set_err(&format!("{name} is null"));
        return Err(TfdStatus::NullArg);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_err(&format!("{name} is not valid UTF-8"));
        TfdStatus::Utf8
    })
}

unsafe fn engine_mut<'a>(ptr: *mut TfdEngine) -> Result<&'a mut Cluster, TfdStatus> {
    if ptr.is_null() {
        set_err("engine is null");
        return Err(TfdStatus::NullArg);
    }
    match (*ptr).cluster.as_mut() {
        Some(cluster) => Ok(cluster),
        None => {
            set_err("engine already shut down");
            Err(TfdStatus::Runtime)
        }
    }
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), TfdStatus> {
    if out.is_null() {
        set_err(&format!("{name} is null"));
        return Err(TfdStatus::NullArg);
    }
    out.write(value);
    Ok(())
}

fn boxed_engine(cfg: Config) -> Result<*mut TfdEngine, TfdStatus> {
    let cluster = Cluster::start_inproc(cfg).map_err(runtime_err)?;
    Ok(Box::into_raw(Box::new(TfdEngine { cluster: Some(cluster) })))
}

fn into_c_string(text: String) -> *mut c_char {
    CString::new(text.replace('\0', " "))
        .unwrap_or_default()
        .into_raw()
}

/// Library version as a static string; do not free it.
#[no_mangle]
pub extern "C" fn tfd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message from the most recent failure on this thread, as a
/// NUL-terminated string. Empty until something fails. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn tfd_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Releases a string previously returned through an out-param.
///
/// # Safety
///
/// `s` must be null (a no-op) or a pointer obtained from this library's
/// out-params, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn tfd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Starts an engine with `n_workers` in-process workers and default
/// settings, writing the handle to `out`.
///
/// # Safety
///
/// `out` must point to writable memory for one pointer. Release the
/// handle with [`tfd_engine_free`].
#[no_mangle]
pub unsafe extern "C" fn tfd_engine_new(n_workers: u32, out: *mut *mut TfdEngine) -> TfdStatus {
    guarded(|| {
        if n_workers == 0 {
            set_err("n_workers must be at least 1");
            return TfdStatus::Runtime;
        }
        let mut cfg = Config::default();
        cfg.n_workers = n_workers as usize;
        match boxed_engine(cfg) {
            Ok(engine) => match write_out(out, engine, "out") {
                Ok(()) => TfdStatus::Ok,
                Err(status) => status,
            },
            Err(status) => status,
        }
    })
}

/// Starts an engine from `key = value` configuration text (same keys as
/// a config file). The transport setting is ignored: an engine is always
/// in-process.
///
/// # Safety
///
/// `config_text` must be a NUL-terminated string; `out` must point to
/// writable memory for one pointer. Release the handle with
/// [`tfd_engine_free`].
#[no_mangle]
pub unsafe extern "C" fn tfd_engine_with_config(
    config_text: *const c_char,
    out: *mut *mut TfdEngine,
) -> TfdStatus {
    guarded(|| {
        let text = match arg_str(config_text, "config_text") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let mut cfg = match Config::parse(text) {
            Ok(cfg) => cfg,
            Err(e) => return runtime_err(e),
        };
        cfg.transport = TransportKind::Inproc;
        match boxed_engine(cfg) {
            Ok(engine) => match write_out(out, engine, "out") {
                Ok(()) => TfdStatus::Ok,
                Err(status) => status,
            },
            Err(status) => status,
        }
    })
}

/// Stops the engine's workers and releases the handle. Null is a no-op.
///
/// # Safety
///
/// `engine` must be null or a handle from an engine constructor, freed
/// at most once and with no other call on it in flight.
#[no_mangle]
pub unsafe extern "C" fn tfd_engine_free(engine: *mut TfdEngine) {
    if engine.is_null() {
        return;
    }
    let mut boxed = Box::from_raw(engine);
    let _ = catch_unwind(AssertUnwindSafe(|| {
        if let Some(cluster) = boxed.cluster.take() {
            if let Err(e) = cluster.shutdown() {
                set_err(&e.to_string());
            }
        }
    }));
}

/// Bulk-loads whitespace-separated `s p o [.]` triple lines, spreading
/// them round-robin across workers. Loading is only allowed before the
/// first redistribution. Writes the number of distinct stored triples to
/// `loaded` (pass null to skip).
///
/// # Safety
///
/// `engine` must be a live handle; `triples` must be a NUL-terminated
/// string; `loaded` must be null or point to writable memory for a
/// `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn tfd_engine_load(
    engine: *mut TfdEngine,
    triples: *const c_char,
    loaded: *mut u64,
) -> TfdStatus {
    guarded(|| {
        let cluster = match engine_mut(engine) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let text = match arg_str(triples, "triples") {
            Ok(t) => t,
            Err(status) => return status,
        };
        match cluster.load_text(text, None) {
            Ok(n) => {
                if !loaded.is_null() {
                    loaded.write(n as u64);
                }
                TfdStatus::Ok
            }
            Err(e) => runtime_err(e),
        }
    })
}

/// Like [`tfd_engine_load`], but places triple `i` on worker
/// `assign[i]`. `assign_len` must equal the number of triples and every
/// id must be below the worker count.
///
/// # Safety
///
/// As [`tfd_engine_load`]; additionally `assign` must point to
/// `assign_len` readable `uint32_t` values.
#[no_mangle]
pub unsafe extern "C" fn tfd_engine_load_placed(
    engine: *mut TfdEngine,
    triples: *const c_char,
    assign: *const u32,
    assign_len: usize,
    loaded: *mut u64,
) -> TfdStatus {
    guarded(|| {
        let cluster = match engine_mut(engine) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let text = match arg_str(triples, "triples") {
            Ok(t) => t,
            Err(status) => return status,
        };
        if assign.is_null() {
            set_err("assign is null");
            return TfdStatus::NullArg;
        }
        let assign = slice::from_raw_parts(assign, assign_len);
        match cluster.load_text(text, Some(assign)) {
            Ok(n) => {
                if !loaded.is_null() {
                    loaded.write(n as u64);
                }
                TfdStatus::Ok
            }
            Err(e) => runtime_err(e),
        }
    })
}

/// Answers one query and writes the rendered result to `out_text`: the
/// execution mode on the first line, then `true`/`false` for
/// variable-free queries or a tab-separated header plus one line per
/// row. Rows are distinct and sorted, so equal answers render
/// identically.
///
/// # Safety
///
/// `engine` must be a live handle; `query` must be a NUL-terminated
/// string; `out_text` must point to writable memory for one pointer.
/// Free the written string with [`tfd_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tfd_engine_query(
    engine: *mut TfdEngine,
    query: *const c_char,
    out_text: *mut *mut c_char,
) -> TfdStatus {
    guarded(|| {
        let cluster = match engine_mut(engine) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let text = match arg_str(query, "query") {
            Ok(t) => t,
            Err(status) => return status,
        };
        match cluster.query_text(text) {
            Ok(outcome) => match write_out(out_text, into_c_string(outcome.render()), "out_text")
            {
                Ok(()) => TfdStatus::Ok,
                Err(status) => status,
            },
            Err(e) => runtime_err(e),
        }
    })
}

/// Applies an update batch (`+ s p o` inserts, `- s p o` deletes, one
/// per line) and writes the number of applied operations to `applied`
/// (pass null to skip).
///
/// # Safety
///
/// `engine` must be a live handle; `updates` must be a NUL-terminated
/// string; `applied` must be null or point to writable memory for a
/// `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn tfd_engine_update(
    engine: *mut TfdEngine,
    updates: *const c_char,
    applied: *mut u64,
) -> TfdStatus {
    guarded(|| {
        let cluster = match engine_mut(engine) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let text = match arg_str(updates, "updates") {
            Ok(t) => t,
            Err(status) => return status,
        };
        match cluster.update_text(text) {
            Ok(outcome) => {
                if !applied.is_null() {
                    applied.write(outcome.applied as u64);
                }
                TfdStatus::Ok
            }
            Err(e) => runtime_err(e),
        }
    })
}

/// Writes the storage and traffic counters as readable text to
/// `out_text`.
///
/// # Safety
///
/// `engine` must be a live handle; `out_text` must point to writable
/// memory for one pointer. Free the written string with
/// [`tfd_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tfd_engine_metrics(
    engine: *mut TfdEngine,
    out_text: *mut *mut c_char,
) -> TfdStatus {
    guarded(|| {
        let cluster = match engine_mut(engine) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let rendered = cluster.metrics().render();
        match write_out(out_text, into_c_string(rendered), "out_text") {
            Ok(()) => TfdStatus::Ok,
            Err(status) => status,
        }
    })
}

/// Writes the current replica-to-main storage ratio to `out`.
///
/// # Safety
///
/// `engine` must be a live handle; `out` must point to writable memory
/// for a `double`.
#[no_mangle]
pub unsafe extern "C" fn tfd_engine_replication_ratio(
    engine: *mut TfdEngine,
    out: *mut f64,
) -> TfdStatus {
    guarded(|| {
        let cluster = match engine_mut(engine) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let ratio = cluster.metrics().replication_ratio();
        match write_out(out, ratio, "out") {
            Ok(()) => TfdStatus::Ok,
            Err(status) => status,
        }
    })
}
