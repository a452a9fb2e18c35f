//! C ABI over the pledger ledger.
//!
//! Handles are opaque. Every function returns a [`PledgerStatus`]; on
//! failure `pledger_last_error` describes the cause for the calling
//! thread. Strings handed out by the library are owned by the caller and
//! released with `pledger_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pledger::canon::{canonicalize, compute_hash};
use pledger::governance::gate_check;
use pledger::graph::build_graph;
use pledger::integrity::{verify_chain, FailureKind};
use pledger::model::{parse_entry, LedgerId, Timestamp};
use pledger::query::{evaluate, parse_query};
use pledger::store::{read_all, AppendError, Ledger, StoreError};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PledgerStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// A document, identifier, timestamp or query did not parse.
    ParseError = 3,
    /// The entry was not admitted to the ledger.
    Rejected = 4,
    /// The file could not be read, written or locked.
    IoError = 5,
    /// The ledger file holds a line that is not an entry.
    Corrupt = 6,
    /// A bug in the library; the handle should not be reused.
    Panic = 7,
}

/// Why a chain failed to verify.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PledgerChainFailure {
    None = 0,
    HashMismatch = 1,
    PrevHashMismatch = 2,
    DuplicateId = 3,
    OrderViolation = 4,
}

/// Outcome of chain verification.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PledgerChainVerdict {
    pub valid: bool,
    /// Index of the first failing entry, or -1 when valid.
    pub first_broken_index: i64,
    pub failure: PledgerChainFailure,
}

/// An open ledger holding the writer lock on its file.
pub struct PledgerLedger {
    inner: Ledger,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(PledgerStatus, String);

impl Failure {
    fn parse(e: impl ToString) -> Self {
        Failure(PledgerStatus::ParseError, e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::CorruptLine { .. } => PledgerStatus::Corrupt,
            _ => PledgerStatus::IoError,
        };
        Failure(status, e.to_string())
    }
}

impl From<AppendError> for Failure {
    fn from(e: AppendError) -> Self {
        let status = match e {
            AppendError::StorageFailure(_) => PledgerStatus::IoError,
            _ => PledgerStatus::Rejected,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PledgerStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PledgerStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PledgerStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(PledgerStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PledgerStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// As [`text`], but null yields `None`.
unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

fn out_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("NUL removed")
        .into_raw()
}

fn null_arg(what: &str) -> Failure {
    Failure(PledgerStatus::NullArgument, format!("{what} is null"))
}

/// Opens (creating if absent) the ledger at `path` and takes its writer
/// lock. On success `*out` receives a handle to release with
/// `pledger_ledger_close`.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pledger_ledger_open(path: *const c_char, out: *mut *mut PledgerLedger) -> PledgerStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let inner = Ledger::open(path)?;
        *out = Box::into_raw(Box::new(PledgerLedger { inner }));
        Ok(())
    })
}

/// Releases a handle and its lock. Null is ignored.
///
/// # Safety
/// `ledger` is null or a handle from `pledger_ledger_open` not yet closed.
#[no_mangle]
pub unsafe extern "C" fn pledger_ledger_close(ledger: *mut PledgerLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}

/// Number of entries in the ledger.
///
/// # Safety
/// `ledger` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pledger_ledger_len(ledger: *const PledgerLedger, out: *mut usize) -> PledgerStatus {
    guard(|| {
        let l = ledger.as_ref().ok_or_else(|| null_arg("ledger"))?;
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        *out = l.inner.entries().len();
        Ok(())
    })
}

/// Head digest as `sha256:<hex>`, or null for an empty ledger.
///
/// # Safety
/// `ledger` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pledger_ledger_head(ledger: *const PledgerLedger, out: *mut *mut c_char) -> PledgerStatus {
    guard(|| {
        let l = ledger.as_ref().ok_or_else(|| null_arg("ledger"))?;
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        *out = l.inner.head().map_or(ptr::null_mut(), |h| out_string(h.to_string()));
        Ok(())
    })
}

/// Seals and appends one entry document. `*out_hash`, when `out_hash` is
/// not null, receives the new entry's hash.
///
/// # Safety
/// `ledger` is a live handle; `entry_json` is a NUL-terminated string;
/// `out_hash` is null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pledger_ledger_append(
    ledger: *mut PledgerLedger,
    entry_json: *const c_char,
    out_hash: *mut *mut c_char,
) -> PledgerStatus {
    guard(|| {
        let l = ledger.as_mut().ok_or_else(|| null_arg("ledger"))?;
        let entry = parse_entry(text(entry_json, "entry_json")?).map_err(Failure::parse)?;
        let (_, sealed) = l.inner.append(entry, None)?;
        if let Some(out) = out_hash.as_mut() {
            *out = out_string(sealed.integrity.as_ref().map(|i| i.hash.clone()).unwrap_or_default());
        }
        Ok(())
    })
}

fn verdict(entries: &[pledger::model::EntryEnvelope]) -> PledgerChainVerdict {
    let v = verify_chain(entries);
    PledgerChainVerdict {
        valid: v.valid,
        first_broken_index: v.first_broken_index.map_or(-1, |i| i as i64),
        failure: match v.failure_kind {
            None => PledgerChainFailure::None,
            Some(FailureKind::HashMismatch) => PledgerChainFailure::HashMismatch,
            Some(FailureKind::PrevHashMismatch) => PledgerChainFailure::PrevHashMismatch,
            Some(FailureKind::DuplicateId) => PledgerChainFailure::DuplicateId,
            Some(FailureKind::OrderViolation) => PledgerChainFailure::OrderViolation,
        },
    }
}

/// Verifies the hash chain of the ledger file at `path` without taking
/// the writer lock. A broken chain is reported through `*out`, not the
/// status.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pledger_verify_file(path: *const c_char, out: *mut PledgerChainVerdict) -> PledgerStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        let entries = read_all(std::path::Path::new(text(path, "path")?))?;
        *out = verdict(&entries);
        Ok(())
    })
}

/// Verifies the entries held by an open ledger.
///
/// # Safety
/// `ledger` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pledger_ledger_verify(ledger: *const PledgerLedger, out: *mut PledgerChainVerdict) -> PledgerStatus {
    guard(|| {
        let l = ledger.as_ref().ok_or_else(|| null_arg("ledger"))?;
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        *out = verdict(l.inner.entries());
        Ok(())
    })
}

/// Runs a pattern query. `*out_json` receives
/// `{"columns":[...],"rows":[[...],...]}`.
///
/// # Safety
/// `ledger` is a live handle; `query` is a NUL-terminated string;
/// `out_json` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pledger_ledger_query(
    ledger: *const PledgerLedger,
    query: *const c_char,
    out_json: *mut *mut c_char,
) -> PledgerStatus {
    guard(|| {
        let l = ledger.as_ref().ok_or_else(|| null_arg("ledger"))?;
        let out = out_json.as_mut().ok_or_else(|| null_arg("out_json"))?;
        let q = parse_query(text(query, "query")?).map_err(Failure::parse)?;
        let table = evaluate(&q, &build_graph(l.inner.entries()));
        *out = out_string(serde_json::json!({"columns": table.columns, "rows": table.rows}).to_string());
        Ok(())
    })
}

/// Gate decision for `capability` on `artifact@version` inside
/// `boundary`. `now` is an RFC 3339 time, or null for the current time.
/// `*allowed` receives the decision; `*out_json`, when not null, the full
/// decision with reasons.
///
/// # Safety
/// `ledger` is a live handle; string arguments are NUL-terminated (`now`
/// may be null); `allowed` is valid; `out_json` is null or valid.
#[no_mangle]
pub unsafe extern "C" fn pledger_ledger_gate_check(
    ledger: *const PledgerLedger,
    capability: *const c_char,
    artifact: *const c_char,
    version: *const c_char,
    boundary: *const c_char,
    now: *const c_char,
    allowed: *mut bool,
    out_json: *mut *mut c_char,
) -> PledgerStatus {
    guard(|| {
        let l = ledger.as_ref().ok_or_else(|| null_arg("ledger"))?;
        let allowed = allowed.as_mut().ok_or_else(|| null_arg("allowed"))?;
        let artifact = LedgerId::parse(text(artifact, "artifact")?).map_err(Failure::parse)?;
        let now = match opt_text(now, "now")? {
            Some(t) => Timestamp::parse(t).map_err(Failure::parse)?,
            None => Timestamp::now(),
        };
        let d = gate_check(
            l.inner.entries(),
            text(capability, "capability")?,
            &artifact,
            text(version, "version")?,
            text(boundary, "boundary")?,
            now,
        );
        *allowed = d.allowed;
        if let Some(out) = out_json.as_mut() {
            *out = out_string(serde_json::to_string(&d).expect("decision serializes"));
        }
        Ok(())
    })
}

/// Content hash of an entry document chained onto `prev_hash` (null for
/// the first entry). Any integrity block in the document is ignored.
///
/// # Safety
/// `entry_json` is NUL-terminated; `prev_hash` is null or NUL-terminated;
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pledger_entry_hash(
    entry_json: *const c_char,
    prev_hash: *const c_char,
    out: *mut *mut c_char,
) -> PledgerStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        let entry = parse_entry(text(entry_json, "entry_json")?).map_err(Failure::parse)?;
        let bytes = canonicalize(&entry, opt_text(prev_hash, "prev_hash")?).map_err(Failure::parse)?;
        *out = out_string(compute_hash(&bytes));
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn pledger_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` is null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pledger_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
