//! C ABI over the `tracewatch` library.
//!
//! All entry points return a [`TwStatus`]. Results come back through out
//! parameters. The message for the most recent failure on the calling
//! thread is available from [`tw_last_error_message`]. Panics never cross
//! the boundary; they surface as `TW_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tracewatch::compiler::{compile, to_dot, Automaton, PredicateRegistry};
use tracewatch::learner::{self, EqualityConfig, LearnedModel};
use tracewatch::logmaker::{self, IngestConfig};
use tracewatch::monitor::{self, Report};
use tracewatch::spec::{parse_spec, pretty_print, Spec};
use tracewatch::Log;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The specification did not parse or failed validation.
    SpecError = 3,
    /// A predicate is unknown, has the wrong arity, or a regex is bad.
    CompileError = 4,
    /// The log text could not be ingested.
    LogError = 5,
    /// A predicate failed while checking.
    MonitorError = 6,
    /// Learning, diffing or model (de)serialization failed.
    LearnError = 7,
    /// An index argument was out of range.
    OutOfRange = 8,
    /// Rust code panicked; the handle arguments should be considered lost.
    Panic = 9,
}

/// Predicates usable by specifications.
pub struct TwRegistry(PredicateRegistry);

/// A parsed specification with its compiled automata.
pub struct TwSpec {
    spec: Spec,
    automata: Vec<Automaton>,
}

/// A finalized event log.
pub struct TwLog(Log);

/// The result of checking one log.
pub struct TwReport(Report);

/// A learned model of known-good runs.
pub struct TwModel(LearnedModel);

/// Callback behind a user predicate. `args_json` is a JSON array: the
/// field value first, then the arguments written in the specification.
/// Store the verdict in `*result` and return 0, or return nonzero to
/// signal a failure, which aborts the check with `TW_STATUS_MONITOR_ERROR`.
pub type TwPredicateFn =
    Option<unsafe extern "C" fn(args_json: *const c_char, user_data: *mut c_void, result: *mut bool) -> c_int>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: TwStatus, msg: impl Into<String>) -> TwStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> TwStatus) -> TwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(TwStatus::Panic, format!("panic: {what}"))
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, TwStatus> {
    if p.is_null() {
        return Err(fail(TwStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(TwStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> TwStatus {
    *out = Box::into_raw(Box::new(value));
    TwStatus::Ok
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> TwStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            TwStatus::Ok
        }
        Err(_) => fail(TwStatus::InvalidUtf8, "result contains a NUL byte"),
    }
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(TwStatus::NullArgument, concat!(stringify!($p), " is null"));
        })+
    };
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message describing the last failure on this thread, or null if none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// predicates

/// A registry holding the built-in predicates.
#[no_mangle]
pub unsafe extern "C" fn tw_registry_new(out: *mut *mut TwRegistry) -> TwStatus {
    nonnull!(out);
    guarded(|| put(out, TwRegistry(PredicateRegistry::with_builtins())))
}

struct UserData(*mut c_void);
// The caller promises the callback may be invoked from any thread.
unsafe impl Send for UserData {}
unsafe impl Sync for UserData {}

/// Adds or replaces predicate `name`. `arity` counts the arguments written
/// in the specification, not the field value. `user_data` is passed back
/// to every call and must stay valid while the registry or any spec
/// compiled with it is alive.
#[no_mangle]
pub unsafe extern "C" fn tw_registry_register(
    registry: *mut TwRegistry,
    name: *const c_char,
    arity: usize,
    callback: TwPredicateFn,
    user_data: *mut c_void,
) -> TwStatus {
    nonnull!(registry);
    let name = try_status!(c_str(name, "name"));
    let Some(callback) = callback else {
        return fail(TwStatus::NullArgument, "callback is null");
    };
    let data = UserData(user_data);
    guarded(|| {
        (&mut *registry).0.register(name, arity, move |args| {
            let json = format!(
                "[{}]",
                args.iter().map(|v| v.to_json().to_string()).collect::<Vec<_>>().join(",")
            );
            let json = CString::new(json).map_err(|e| e.to_string())?;
            let mut verdict = false;
            let data = &data;
            // SAFETY: the registrant vouched for the callback and its data
            match unsafe { callback(json.as_ptr(), data.0, &mut verdict) } {
                0 => Ok(verdict),
                code => Err(format!("callback returned {code}")),
            }
        });
        TwStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_registry_free(registry: *mut TwRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

// ---------------------------------------------------------------------------
// specifications

/// Parses and compiles `text`. A null `registry` means the built-ins.
#[no_mangle]
pub unsafe extern "C" fn tw_spec_parse(
    text: *const c_char,
    registry: *const TwRegistry,
    out: *mut *mut TwSpec,
) -> TwStatus {
    nonnull!(out);
    let src = try_status!(c_str(text, "text"));
    guarded(|| {
        let spec = match parse_spec(src) {
            Ok(s) => s,
            Err(e) => return fail(TwStatus::SpecError, e.to_string()),
        };
        let builtins;
        let registry = if registry.is_null() {
            builtins = PredicateRegistry::with_builtins();
            &builtins
        } else {
            &(&*registry).0
        };
        match compile(&spec, registry) {
            Ok(automata) => put(out, TwSpec { spec, automata }),
            Err(e) => fail(TwStatus::CompileError, e.to_string()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_spec_free(spec: *mut TwSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tw_spec_pattern_count(spec: *const TwSpec, out: *mut usize) -> TwStatus {
    nonnull!(spec, out);
    *out = (&*spec).automata.len();
    TwStatus::Ok
}

/// Canonical text of the specification.
#[no_mangle]
pub unsafe extern "C" fn tw_spec_pretty(spec: *const TwSpec, out: *mut *mut c_char) -> TwStatus {
    nonnull!(spec, out);
    guarded(|| put_string(out, pretty_print(&(*spec).spec)))
}

/// Graphviz rendering of pattern number `index`.
#[no_mangle]
pub unsafe extern "C" fn tw_spec_to_dot(spec: *const TwSpec, index: usize, out: *mut *mut c_char) -> TwStatus {
    nonnull!(spec, out);
    guarded(|| match (&*spec).automata.get(index) {
        Some(a) => put_string(out, to_dot(a)),
        None => fail(TwStatus::OutOfRange, format!("no pattern {index}")),
    })
}

// ---------------------------------------------------------------------------
// logs

/// Ingests JSON lines with the default configuration and finalizes them.
#[no_mangle]
pub unsafe extern "C" fn tw_log_from_jsonl(
    text: *const c_char,
    source_id: *const c_char,
    out: *mut *mut TwLog,
) -> TwStatus {
    nonnull!(out);
    let src = try_status!(c_str(text, "text"));
    let id = try_status!(c_str(source_id, "source_id"));
    guarded(|| match logmaker::load_jsonl(src, id, &IngestConfig::default()) {
        Ok(log) => put(out, TwLog(log)),
        Err(e) => fail(TwStatus::LogError, e.to_string()),
    })
}

/// Number of events, boundary markers included.
#[no_mangle]
pub unsafe extern "C" fn tw_log_len(log: *const TwLog, out: *mut usize) -> TwStatus {
    nonnull!(log, out);
    *out = (&*log).0.len();
    TwStatus::Ok
}

/// Canonical JSON-lines form of the log.
#[no_mangle]
pub unsafe extern "C" fn tw_log_to_jsonl(log: *const TwLog, out: *mut *mut c_char) -> TwStatus {
    nonnull!(log, out);
    guarded(|| put_string(out, logmaker::serialize_log(&(*log).0)))
}

#[no_mangle]
pub unsafe extern "C" fn tw_log_free(log: *mut TwLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

// ---------------------------------------------------------------------------
// checking

#[no_mangle]
pub unsafe extern "C" fn tw_check(spec: *const TwSpec, log: *const TwLog, out: *mut *mut TwReport) -> TwStatus {
    nonnull!(spec, log, out);
    guarded(|| match monitor::check(&(*spec).automata, &(*log).0) {
        Ok(r) => put(out, TwReport(r)),
        Err(e) => fail(TwStatus::MonitorError, e.to_string()),
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_report_passed(report: *const TwReport, out: *mut bool) -> TwStatus {
    nonnull!(report, out);
    *out = (&*report).0.passed();
    TwStatus::Ok
}

#[no_mangle]
pub unsafe extern "C" fn tw_report_violation_count(report: *const TwReport, out: *mut usize) -> TwStatus {
    nonnull!(report, out);
    *out = (&*report).0.violation_count();
    TwStatus::Ok
}

/// JSON form of the report, listing at most `max_violations` violations
/// (0 lists all).
#[no_mangle]
pub unsafe extern "C" fn tw_report_to_json(
    report: *const TwReport,
    max_violations: usize,
    out: *mut *mut c_char,
) -> TwStatus {
    nonnull!(report, out);
    guarded(|| put_string(out, (&*report).0.to_json(max_violations).to_string()))
}

#[no_mangle]
pub unsafe extern "C" fn tw_report_free(report: *mut TwReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

// ---------------------------------------------------------------------------
// learning

/// Learns a model from `count` logs. A null `equality_json` compares
/// events on kind alone.
#[no_mangle]
pub unsafe extern "C" fn tw_model_learn(
    logs: *const *const TwLog,
    count: usize,
    equality_json: *const c_char,
    out: *mut *mut TwModel,
) -> TwStatus {
    nonnull!(out);
    if logs.is_null() && count > 0 {
        return fail(TwStatus::NullArgument, "logs is null");
    }
    let cfg = if equality_json.is_null() {
        EqualityConfig::default()
    } else {
        let src = try_status!(c_str(equality_json, "equality_json"));
        match EqualityConfig::from_json(src) {
            Ok(c) => c,
            Err(e) => return fail(TwStatus::LearnError, e.to_string()),
        }
    };
    guarded(|| {
        let mut owned = Vec::with_capacity(count);
        for i in 0..count {
            let p = *logs.add(i);
            if p.is_null() {
                return fail(TwStatus::NullArgument, format!("logs[{i}] is null"));
            }
            owned.push((&*p).0.clone());
        }
        match learner::learn(&owned, &cfg) {
            Ok(m) => put(out, TwModel(m)),
            Err(e) => fail(TwStatus::LearnError, e.to_string()),
        }
    })
}

/// Marks the model endorsed.
#[no_mangle]
pub unsafe extern "C" fn tw_model_endorse(model: *mut TwModel) -> TwStatus {
    nonnull!(model);
    (&mut *model).0.endorsed = true;
    TwStatus::Ok
}

/// Compares `log` with the model. `matched` receives the verdict; `text`,
/// if not null, receives the human-readable diff.
#[no_mangle]
pub unsafe extern "C" fn tw_model_diff(
    model: *const TwModel,
    log: *const TwLog,
    matched: *mut bool,
    text_out: *mut *mut c_char,
) -> TwStatus {
    nonnull!(model, log, matched);
    guarded(|| {
        let d = learner::diff(&(*model).0, &(*log).0);
        *matched = d.is_match();
        if text_out.is_null() {
            TwStatus::Ok
        } else {
            put_string(text_out, d.to_text())
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_model_to_json(model: *const TwModel, out: *mut *mut c_char) -> TwStatus {
    nonnull!(model, out);
    guarded(|| put_string(out, (&*model).0.to_json()))
}

#[no_mangle]
pub unsafe extern "C" fn tw_model_from_json(json: *const c_char, out: *mut *mut TwModel) -> TwStatus {
    nonnull!(out);
    let src = try_status!(c_str(json, "json"));
    guarded(|| match LearnedModel::from_json(src) {
        Ok(m) => put(out, TwModel(m)),
        Err(e) => fail(TwStatus::LearnError, e.to_string()),
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_model_free(model: *mut TwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
