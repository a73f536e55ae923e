use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use gbm_core::hierarchy::write_ensemble;
use gbm_core::runtime::CertAuthority;
use gbm_core::sim::{laws, ScenarioConfig};
use gbm_ffi::*;

fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { gbm_string_free(s) };
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(gbm_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn parse_hash_and_canonical_text() {
    let text = CString::new("UPON sent(_) DO [forward]").unwrap();
    let spaced = CString::new("UPON   sent( _ )\n DO [ forward ]").unwrap();
    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(gbm_law_parse(text.as_ptr(), &mut a), GbmStatus::Ok);
        assert_eq!(gbm_law_parse(spaced.as_ptr(), &mut b), GbmStatus::Ok);
        let (mut ha, mut hb, mut canon) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(gbm_law_hash_hex(a, &mut ha), GbmStatus::Ok);
        assert_eq!(gbm_law_hash_hex(b, &mut hb), GbmStatus::Ok);
        let ha = take(ha);
        assert_eq!(ha.len(), 64);
        assert_eq!(ha, take(hb));
        assert_eq!(gbm_law_canonical(a, &mut canon), GbmStatus::Ok);
        assert!(take(canon).contains("forward"));
        gbm_law_free(a);
        gbm_law_free(b);
    }
}

#[test]
fn errors_are_reported_per_thread() {
    let bad = CString::new("UPON sent(_) DO [launch]").unwrap();
    let mut law = ptr::null_mut();
    unsafe {
        assert_eq!(gbm_law_parse(bad.as_ptr(), &mut law), GbmStatus::ParseError);
        assert!(law.is_null());
        assert!(last_error().contains("launch"));
        assert_eq!(gbm_law_parse(ptr::null(), &mut law), GbmStatus::NullArgument);
        assert_eq!(gbm_law_hash_hex(ptr::null(), &mut ptr::null_mut()), GbmStatus::NullArgument);
        assert_eq!(gbm_ensemble_len(ptr::null()), 0);
        gbm_law_free(ptr::null_mut());
        gbm_string_free(ptr::null_mut());
    }
    std::thread::spawn(|| assert!(gbm_last_error().is_null())).join().unwrap();
}

#[test]
fn ensemble_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::demo();
    let ca = CertAuthority::deterministic(&cfg.ca_label);
    let manifest = write_ensemble(dir.path(), &laws::ensemble(&cfg.law_params(&ca.public_hex()))).unwrap();
    let path = CString::new(manifest.to_str().unwrap()).unwrap();
    let mut ens = ptr::null_mut();
    unsafe {
        assert_eq!(gbm_ensemble_load(path.as_ptr(), &mut ens), GbmStatus::Ok);
        assert_eq!(gbm_ensemble_len(ens), 4);
        assert_eq!(gbm_ensemble_warnings(ens), 0);
        let mut root = ptr::null_mut();
        assert_eq!(gbm_ensemble_root_hash_hex(ens, &mut root), GbmStatus::Ok);
        assert_eq!(take(root).len(), 64);
        gbm_ensemble_free(ens);
        let missing = CString::new("/nonexistent/ensemble.json").unwrap();
        assert_eq!(gbm_ensemble_load(missing.as_ptr(), &mut ens), GbmStatus::IoError);
    }
}

#[test]
fn acme_run_is_deterministic_and_verifies() {
    let script = CString::new(r#"{"injections":[{"time":30,"buyer":"store7","kind":"overspend","amount":1e9}]}"#).unwrap();
    unsafe {
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(gbm_acme_run(ptr::null(), 42, 120.0, ptr::null(), &mut a), GbmStatus::Ok);
        assert_eq!(gbm_acme_run(ptr::null(), 42, 120.0, ptr::null(), &mut b), GbmStatus::Ok);
        assert_eq!(take(a), take(b));
        let mut v = ptr::null_mut();
        assert_eq!(gbm_acme_verify(ptr::null(), 42, 120.0, script.as_ptr(), &mut v), GbmStatus::Ok);
        let verdict: serde_json::Value = serde_json::from_str(&take(v)).unwrap();
        assert_eq!(verdict["injectionsBlocked"], 1);
        let bad = CString::new("{not json").unwrap();
        assert_eq!(gbm_acme_run(bad.as_ptr(), 1, 10.0, ptr::null(), &mut a), GbmStatus::InvalidArgument);
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/gbm.h")).unwrap();
    for f in [
        "gbm_last_error",
        "gbm_version",
        "gbm_string_free",
        "gbm_law_parse",
        "gbm_law_hash_hex",
        "gbm_law_free",
        "gbm_ensemble_load",
        "gbm_ensemble_free",
        "gbm_acme_run",
        "gbm_acme_verify",
        "typedef struct GbmLaw GbmLaw",
        "GBM_STATUS_OK = 0",
    ] {
        assert!(header.contains(f), "header lacks {f}");
    }
}

/// Compiles and runs a small C program against the static library when a C
/// compiler and the archive are available.
#[test]
fn c_program_links_and_runs() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = std::env::var_os("CARGO_TARGET_DIR").map(PathBuf::from).unwrap_or_else(|| root.join("../../target"));
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    let lib = target.join(profile).join("libgbm_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or {} missing", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "gbm.h"
int main(void) {
    GbmLaw *law = NULL;
    if (gbm_law_parse("UPON sent(_) DO [forward]", &law) != GBM_STATUS_OK) return 2;
    char *hex = NULL;
    if (gbm_law_hash_hex(law, &hex) != GBM_STATUS_OK) return 3;
    printf("%s\n", hex);
    gbm_string_free(hex);
    gbm_law_free(law);
    if (gbm_law_parse("UPON", &law) != GBM_STATUS_PARSE_ERROR) return 4;
    return gbm_last_error() == NULL ? 5 : 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim().len(), 64);
}
