//! C interface.
//!
//! Objects cross the boundary as opaque pointers owned by the caller and
//! released with the matching `*_free` function. Strings returned through
//! out-parameters are allocated here and must be released with
//! [`gbm_string_free`]. Every fallible function returns a [`GbmStatus`];
//! on failure [`gbm_last_error`] describes what went wrong on the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gbm_core::hierarchy::{build_ensemble, load_sources, LawTree};
use gbm_core::lang::{canonical_text, hash_law, parse_law, render, LawAst, LawSource};
use gbm_core::sim::{run_scenario, verify_trace, MisbehaviorScript, ScenarioConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    EnsembleError = 4,
    IoError = 5,
    InvalidArgument = 6,
    VerifyFailed = 7,
    Panic = 8,
}

/// A parsed and validated law.
pub struct GbmLaw {
    ast: LawAst,
}

/// A law ensemble that passed the conformance checks.
pub struct GbmEnsemble {
    tree: LawTree,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: GbmStatus, msg: impl Into<String>) -> GbmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> GbmStatus) -> GbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(GbmStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, GbmStatus> {
    if p.is_null() {
        return Err(fail(GbmStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(GbmStatus::InvalidUtf8, "argument is not UTF-8"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> GbmStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            GbmStatus::Ok
        }
        Err(_) => fail(GbmStatus::InvalidArgument, "result contains a nul byte"),
    }
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gbm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gbm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gbm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a standalone law.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gbm_law_parse(text: *const c_char, out: *mut *mut GbmLaw) -> GbmStatus {
    guard(|| {
        if out.is_null() {
            return fail(GbmStatus::NullArgument, "null out pointer");
        }
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_law(&LawSource::new("law", None, text)) {
            Ok(ast) => {
                *out = Box::into_raw(Box::new(GbmLaw { ast }));
                GbmStatus::Ok
            }
            Err(d) => fail(GbmStatus::ParseError, render(&d)),
        }
    })
}

/// Hex SHA-256 of the law's canonical text.
///
/// # Safety
/// `law` must come from [`gbm_law_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gbm_law_hash_hex(law: *const GbmLaw, out: *mut *mut c_char) -> GbmStatus {
    guard(|| match (law.as_ref(), out.is_null()) {
        (Some(l), false) => put_string(out, hash_law(&l.ast).to_hex()),
        _ => fail(GbmStatus::NullArgument, "null argument"),
    })
}

/// The law's canonical text.
///
/// # Safety
/// `law` must come from [`gbm_law_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gbm_law_canonical(law: *const GbmLaw, out: *mut *mut c_char) -> GbmStatus {
    guard(|| match (law.as_ref(), out.is_null()) {
        (Some(l), false) => put_string(out, canonical_text(&l.ast)),
        _ => fail(GbmStatus::NullArgument, "null argument"),
    })
}

/// # Safety
/// `law` must be null or come from [`gbm_law_parse`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gbm_law_free(law: *mut GbmLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Loads a manifest and builds its ensemble, running every conformance check.
///
/// # Safety
/// `manifest_path` must be a nul-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gbm_ensemble_load(manifest_path: *const c_char, out: *mut *mut GbmEnsemble) -> GbmStatus {
    guard(|| {
        if out.is_null() {
            return fail(GbmStatus::NullArgument, "null out pointer");
        }
        let path = match str_arg(manifest_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let sources = match load_sources(Path::new(path)) {
            Ok(s) => s,
            Err(e) => return fail(GbmStatus::IoError, e.to_string()),
        };
        match build_ensemble(&sources) {
            Ok(tree) => {
                *out = Box::into_raw(Box::new(GbmEnsemble { tree }));
                GbmStatus::Ok
            }
            Err(d) => fail(GbmStatus::EnsembleError, render(&d)),
        }
    })
}

/// Number of laws in the ensemble; 0 for null.
///
/// # Safety
/// `ens` must be null or come from [`gbm_ensemble_load`].
#[no_mangle]
pub unsafe extern "C" fn gbm_ensemble_len(ens: *const GbmEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.tree.len())
}

/// Number of non-fatal conformance warnings; 0 for null.
///
/// # Safety
/// `ens` must be null or come from [`gbm_ensemble_load`].
#[no_mangle]
pub unsafe extern "C" fn gbm_ensemble_warnings(ens: *const GbmEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.tree.warnings.len())
}

/// Hex hash of the ensemble's root law.
///
/// # Safety
/// `ens` must come from [`gbm_ensemble_load`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gbm_ensemble_root_hash_hex(ens: *const GbmEnsemble, out: *mut *mut c_char) -> GbmStatus {
    guard(|| match (ens.as_ref(), out.is_null()) {
        (Some(e), false) => put_string(out, e.tree.root().hash.to_hex()),
        _ => fail(GbmStatus::NullArgument, "null argument"),
    })
}

/// # Safety
/// `ens` must be null or come from [`gbm_ensemble_load`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gbm_ensemble_free(ens: *mut GbmEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

unsafe fn scenario_inputs(
    config_json: *const c_char,
    script_json: *const c_char,
) -> Result<(ScenarioConfig, MisbehaviorScript), GbmStatus> {
    let cfg = if config_json.is_null() {
        ScenarioConfig::demo()
    } else {
        serde_json::from_str(str_arg(config_json)?).map_err(|e| fail(GbmStatus::InvalidArgument, format!("config: {e}")))?
    };
    let script = if script_json.is_null() {
        MisbehaviorScript::default()
    } else {
        serde_json::from_str(str_arg(script_json)?).map_err(|e| fail(GbmStatus::InvalidArgument, format!("script: {e}")))?
    };
    Ok((cfg, script))
}

/// Runs the supermarket scenario and returns the trace's hex SHA-256.
/// `config_json` and `script_json` may be null for the demo configuration
/// and an empty script.
///
/// # Safety
/// String arguments must be null or nul-terminated; `digest_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gbm_acme_run(
    config_json: *const c_char,
    seed: u64,
    until: f64,
    script_json: *const c_char,
    digest_out: *mut *mut c_char,
) -> GbmStatus {
    guard(|| {
        if digest_out.is_null() {
            return fail(GbmStatus::NullArgument, "null out pointer");
        }
        let (cfg, script) = match scenario_inputs(config_json, script_json) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match run_scenario(&cfg, seed, until, &script) {
            Ok(t) => put_string(digest_out, t.digest()),
            Err(e) => fail(GbmStatus::InvalidArgument, format!("{e:#}")),
        }
    })
}

/// Runs the scenario and checks its trace; writes the verdict as JSON.
/// Returns `VerifyFailed` (with the verdict still written) when the trace
/// does not pass.
///
/// # Safety
/// As for [`gbm_acme_run`].
#[no_mangle]
pub unsafe extern "C" fn gbm_acme_verify(
    config_json: *const c_char,
    seed: u64,
    until: f64,
    script_json: *const c_char,
    verdict_out: *mut *mut c_char,
) -> GbmStatus {
    guard(|| {
        if verdict_out.is_null() {
            return fail(GbmStatus::NullArgument, "null out pointer");
        }
        let (cfg, script) = match scenario_inputs(config_json, script_json) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let trace = match run_scenario(&cfg, seed, until, &script) {
            Ok(t) => t,
            Err(e) => return fail(GbmStatus::InvalidArgument, format!("{e:#}")),
        };
        let v = verify_trace(&trace, &script);
        let status = put_string(verdict_out, serde_json::to_string(&v).expect("verdicts serialize"));
        if status == GbmStatus::Ok && !v.ok {
            return fail(GbmStatus::VerifyFailed, v.failures.join("; "));
        }
        status
    })
}
