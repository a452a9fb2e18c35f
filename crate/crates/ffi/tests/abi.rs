use std::ffi::{c_char, CStr, CString};
use std::ptr;

use pledger_ffi::*;

const CONTRIBUTION: &str = include_str!("../../core/tests/fixtures/reference_entry.json");
const DIGEST: &str = include_str!("../../core/tests/fixtures/reference_digest.txt");

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    pledger_string_free(p);
    s
}

fn last_error() -> String {
    let p = pledger_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn test_entry() -> String {
    serde_json::json!({
        "id": "pl:test:accessibility:001",
        "type": "Test",
        "createdAt": "2025-05-11T10:00:00Z",
        "actor": {"role": "maintainer", "pseudonym": "maint-07"},
        "test": {
            "topic": "accessibility",
            "inputSpec": {"promptSet": "artifact:prompt:sha256:00"},
            "expectedBehavior": "continuous accessible path",
            "measurement": {
                "runnerKind": "rubric",
                "criteria": ["continuousAccessiblePath"],
                "scaleMax": 5,
                "aggregation": "mean",
                "passMean": 4,
                "minRaters": 3
            },
            "motivatedBy": ["pl:contrib:wedesign:prompt:001"],
            "targets": ["pl:artifact:t2i"]
        }
    })
    .to_string()
}

#[test]
fn entry_hash_matches_golden_digest() {
    let mut out = ptr::null_mut();
    let st = unsafe { pledger_entry_hash(c(CONTRIBUTION).as_ptr(), ptr::null(), &mut out) };
    assert_eq!(st, PledgerStatus::Ok);
    assert_eq!(unsafe { take(out) }, DIGEST.trim());
}

#[test]
fn open_append_query_verify_close() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    let path_c = c(path.to_str().unwrap());
    unsafe {
        let mut l = ptr::null_mut();
        assert_eq!(pledger_ledger_open(path_c.as_ptr(), &mut l), PledgerStatus::Ok);
        let mut head = ptr::null_mut();
        assert_eq!(pledger_ledger_head(l, &mut head), PledgerStatus::Ok);
        assert!(head.is_null());

        let mut h1 = ptr::null_mut();
        assert_eq!(pledger_ledger_append(l, c(CONTRIBUTION).as_ptr(), &mut h1), PledgerStatus::Ok);
        assert_eq!(take(h1), DIGEST.trim());
        assert_eq!(pledger_ledger_append(l, c(&test_entry()).as_ptr(), ptr::null_mut()), PledgerStatus::Ok);

        let mut n = 0usize;
        assert_eq!(pledger_ledger_len(l, &mut n), PledgerStatus::Ok);
        assert_eq!(n, 2);

        let mut json = ptr::null_mut();
        let q = c("MATCH (c:Contribution)-[:MOTIVATES]->(t:Test) RETURN c.id, t.id");
        assert_eq!(pledger_ledger_query(l, q.as_ptr(), &mut json), PledgerStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v["rows"][0][1], "pl:test:accessibility:001");

        let mut verdict = PledgerChainVerdict {
            valid: false,
            first_broken_index: 0,
            failure: PledgerChainFailure::HashMismatch,
        };
        assert_eq!(pledger_ledger_verify(l, &mut verdict), PledgerStatus::Ok);
        assert!(verdict.valid);
        assert_eq!(verdict.first_broken_index, -1);
        pledger_ledger_close(l);

        assert_eq!(pledger_verify_file(path_c.as_ptr(), &mut verdict), PledgerStatus::Ok);
        assert!(verdict.valid);
    }

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("accessibility", "accessibilitz", 1)).unwrap();
    let mut verdict = PledgerChainVerdict {
        valid: true,
        first_broken_index: -1,
        failure: PledgerChainFailure::None,
    };
    assert_eq!(unsafe { pledger_verify_file(path_c.as_ptr(), &mut verdict) }, PledgerStatus::Ok);
    assert!(!verdict.valid);
    assert_eq!(verdict.failure, PledgerChainFailure::HashMismatch);
    assert!(verdict.first_broken_index >= 0);
}

#[test]
fn gate_defaults_to_allow_without_vouchers() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("l.jsonl").to_str().unwrap());
    unsafe {
        let mut l = ptr::null_mut();
        assert_eq!(pledger_ledger_open(path.as_ptr(), &mut l), PledgerStatus::Ok);
        let mut allowed = false;
        let mut json = ptr::null_mut();
        let st = pledger_ledger_gate_check(
            l,
            c("image-generation").as_ptr(),
            c("pl:artifact:t2i").as_ptr(),
            c("v1").as_ptr(),
            c("consultation_workflow").as_ptr(),
            c("2025-06-01T00:00:00Z").as_ptr(),
            &mut allowed,
            &mut json,
        );
        assert_eq!(st, PledgerStatus::Ok);
        assert!(allowed);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v["reasons"][0]["reasonKind"], "noApplicableVoucher-defaultAllow");
        pledger_ledger_close(l);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("l.jsonl").to_str().unwrap());
    unsafe {
        let mut l = ptr::null_mut();
        assert_eq!(pledger_ledger_open(ptr::null(), &mut l), PledgerStatus::NullArgument);
        assert!(l.is_null());
        assert!(last_error().contains("path"));

        assert_eq!(pledger_ledger_open(path.as_ptr(), &mut l), PledgerStatus::Ok);
        let st = pledger_ledger_append(l, c("{not json").as_ptr(), ptr::null_mut());
        assert_eq!(st, PledgerStatus::ParseError);
        assert!(!last_error().is_empty());

        assert_eq!(pledger_ledger_append(l, c(CONTRIBUTION).as_ptr(), ptr::null_mut()), PledgerStatus::Ok);
        let st = pledger_ledger_append(l, c(CONTRIBUTION).as_ptr(), ptr::null_mut());
        assert_eq!(st, PledgerStatus::Rejected);
        assert!(last_error().contains("pl:contrib:wedesign:prompt:001"));

        let mut second = ptr::null_mut();
        assert_eq!(pledger_ledger_open(path.as_ptr(), &mut second), PledgerStatus::IoError);

        let mut json = ptr::null_mut();
        assert_eq!(pledger_ledger_query(l, c("MATCH (").as_ptr(), &mut json), PledgerStatus::ParseError);
        assert!(json.is_null());

        let mut n = 7usize;
        assert_eq!(pledger_ledger_len(l, &mut n), PledgerStatus::Ok);
        assert_eq!(n, 1);
        assert!(pledger_last_error().is_null());
        pledger_ledger_close(l);
        pledger_ledger_close(ptr::null_mut());
        pledger_string_free(ptr::null_mut());
    }
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/pledger.h");
    let src = std::fs::read_to_string(header).unwrap();
    for f in [
        "pledger_ledger_open",
        "pledger_ledger_close",
        "pledger_ledger_append",
        "pledger_verify_file",
        "pledger_ledger_gate_check",
        "pledger_string_free",
        "pledger_last_error",
    ] {
        assert!(src.contains(f), "{f} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(status.success());
}
