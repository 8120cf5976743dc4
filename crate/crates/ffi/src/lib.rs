//! C ABI for external harnesses: sample and render crafted responses, look
//! tokens up in a campaign ledger, ingest scanner reports, audit a campaign
//! directory and run the static exploit check.
//!
//! Every fallible function returns a [`RevstrikeStatus`]; on failure the
//! message is kept per thread and read with [`revstrike_last_error`].
//! Handles are opaque and freed with their matching `_free` function.
//! Strings and buffers handed out are owned by the caller and released with
//! [`revstrike_string_free`] / [`revstrike_buffer_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use revstrike::analyzer::{check_exploit_static, find_tainted_flows};
use revstrike::grammar::{builtin_grammar, Pcfg};
use revstrike::ledger::{audit, Ledger, Token};
use revstrike::payload::Payload;
use revstrike::stub::craft_for_connection;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevstrikeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidGrammar = 4,
    SampleError = 5,
    LedgerError = 6,
    IoError = 7,
    NotFound = 8,
    CheckFailed = 9,
    Panic = 10,
}

/// Owned byte buffer; release with [`revstrike_buffer_free`].
#[repr(C)]
pub struct RevstrikeBuffer {
    pub data: *mut u8,
    pub len: usize,
}

/// Result of [`revstrike_check_static`].
#[repr(C)]
pub struct RevstrikeVerdict {
    pub confirmed: bool,
    /// Kebab-case reason; release with [`revstrike_string_free`].
    pub reason: *mut c_char,
}

/// Result of [`revstrike_ledger_audit`].
#[repr(C)]
pub struct RevstrikeAudit {
    pub records_checked: usize,
    pub mutated: usize,
    pub malformed: usize,
    pub partial_tails: usize,
    pub referential: usize,
    pub clean: bool,
}

pub struct RevstrikeGrammar(Pcfg);

pub struct RevstrikeLedger(Arc<Ledger>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type FfiResult<T> = Result<T, (RevstrikeStatus, String)>;

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, mapping errors and panics onto a status code.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> RevstrikeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RevstrikeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RevstrikeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((RevstrikeStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (RevstrikeStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, name: &str) -> FfiResult<&'a [u8]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err((RevstrikeStatus::NullArgument, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| (RevstrikeStatus::NullArgument, format!("{name} is null")))
}

fn into_c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', "\\0")).map_or(ptr::null_mut(), CString::into_raw)
}

fn ledger_err(e: impl std::fmt::Display) -> (RevstrikeStatus, String) {
    (RevstrikeStatus::LedgerError, e.to_string())
}

/// Message of the last failure on this thread, or NULL. Release with
/// [`revstrike_string_free`].
#[no_mangle]
pub extern "C" fn revstrike_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` is NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn revstrike_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `buf` was filled by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn revstrike_buffer_free(buf: RevstrikeBuffer) {
    if !buf.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf.data, buf.len)));
    }
}

/// Library version, static; do not free.
#[no_mangle]
pub extern "C" fn revstrike_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` is a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn revstrike_grammar_builtin(out: *mut *mut RevstrikeGrammar) -> RevstrikeStatus {
    guard(|| {
        *out_arg(out, "out")? = Box::into_raw(Box::new(RevstrikeGrammar(builtin_grammar())));
        Ok(())
    })
}

/// Parses grammar text, closes it under ε and validates it.
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_grammar_parse(
    text: *const c_char,
    out: *mut *mut RevstrikeGrammar,
) -> RevstrikeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        let g = Pcfg::from_text(text)
            .map_err(|e| (RevstrikeStatus::ParseError, e.to_string()))?
            .with_epsilon_closure();
        if let Some(v) = g.validate().first() {
            return Err((RevstrikeStatus::InvalidGrammar, v.to_string()));
        }
        *out = Box::into_raw(Box::new(RevstrikeGrammar(g)));
        Ok(())
    })
}

/// # Safety
/// `g` is NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn revstrike_grammar_free(g: *mut RevstrikeGrammar) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Canonical text form of the grammar.
///
/// # Safety
/// `g` is a live grammar handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_grammar_to_text(
    g: *const RevstrikeGrammar,
    out: *mut *mut c_char,
) -> RevstrikeStatus {
    guard(|| {
        let g = g.as_ref().ok_or((RevstrikeStatus::NullArgument, "grammar is null".into()))?;
        *out_arg(out, "out")? = into_c_string(&g.0.to_text());
        Ok(())
    })
}

/// Wire bytes of the response the stub would serve on connection `index`
/// of a campaign, with freshly seeded tokens.
///
/// # Safety
/// `g` is a live grammar handle, `campaign_id` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_craft_response(
    g: *const RevstrikeGrammar,
    campaign_id: *const c_char,
    seed: u64,
    index: u64,
    out: *mut RevstrikeBuffer,
) -> RevstrikeStatus {
    guard(|| {
        let g = g.as_ref().ok_or((RevstrikeStatus::NullArgument, "grammar is null".into()))?;
        let id = str_arg(campaign_id, "campaign_id")?;
        let out = out_arg(out, "out")?;
        let crafted = craft_for_connection(&g.0, id, seed, index)
            .map_err(|e| (RevstrikeStatus::SampleError, e.to_string()))?;
        let bytes = crafted.rendered().into_boxed_slice();
        let len = bytes.len();
        *out = RevstrikeBuffer {
            data: Box::into_raw(bytes).cast(),
            len,
        };
        Ok(())
    })
}

/// Seeded tracking token (36-character UUIDv4).
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_token_generate(seed: u64, out: *mut *mut c_char) -> RevstrikeStatus {
    guard(|| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        *out_arg(out, "out")? = into_c_string(Token::generate(&mut rng).as_str());
        Ok(())
    })
}

/// Opens the campaign in `dir`, creating it when it has no manifest yet.
///
/// # Safety
/// String arguments are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_ledger_create(
    dir: *const c_char,
    campaign_id: *const c_char,
    seed: u64,
    out: *mut *mut RevstrikeLedger,
) -> RevstrikeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dir = str_arg(dir, "dir")?;
        let id = str_arg(campaign_id, "campaign_id")?;
        let l = Ledger::create(Path::new(dir), id, seed).map_err(ledger_err)?;
        *out = Box::into_raw(Box::new(RevstrikeLedger(Arc::new(l))));
        Ok(())
    })
}

/// Opens an existing campaign.
///
/// # Safety
/// `dir` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_ledger_open(dir: *const c_char, out: *mut *mut RevstrikeLedger) -> RevstrikeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dir = str_arg(dir, "dir")?;
        let l = Ledger::open(Path::new(dir)).map_err(ledger_err)?;
        *out = Box::into_raw(Box::new(RevstrikeLedger(Arc::new(l))));
        Ok(())
    })
}

/// # Safety
/// `l` is NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn revstrike_ledger_free(l: *mut RevstrikeLedger) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Records the response for connection `index` as the stub would, and
/// returns its response id.
///
/// # Safety
/// `l` and `g` are live handles; `out_response_id` is writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_ledger_record_crafted(
    l: *const RevstrikeLedger,
    g: *const RevstrikeGrammar,
    index: u64,
    out_response_id: *mut *mut c_char,
) -> RevstrikeStatus {
    guard(|| {
        let l = l.as_ref().ok_or((RevstrikeStatus::NullArgument, "ledger is null".into()))?;
        let g = g.as_ref().ok_or((RevstrikeStatus::NullArgument, "grammar is null".into()))?;
        let out = out_arg(out_response_id, "out_response_id")?;
        let m = l.0.manifest();
        let crafted = craft_for_connection(&g.0, &m.campaign_id, m.master_seed, index)
            .map_err(|e| (RevstrikeStatus::SampleError, e.to_string()))?;
        let id = l.0.record_response(crafted).map_err(ledger_err)?;
        *out = into_c_string(&id);
        Ok(())
    })
}

/// Response id and field name a token was planted in.
/// [`RevstrikeStatus::NotFound`] when the token was never issued.
///
/// # Safety
/// `l` is a live handle, `token` NUL-terminated, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_ledger_lookup_token(
    l: *const RevstrikeLedger,
    token: *const c_char,
    out_response_id: *mut *mut c_char,
    out_field: *mut *mut c_char,
) -> RevstrikeStatus {
    guard(|| {
        let l = l.as_ref().ok_or((RevstrikeStatus::NullArgument, "ledger is null".into()))?;
        let token = str_arg(token, "token")?;
        let out_id = out_arg(out_response_id, "out_response_id")?;
        let out_field = out_arg(out_field, "out_field")?;
        let token = Token::parse(token).map_err(|e| (RevstrikeStatus::ParseError, e.to_string()))?;
        let (id, field) = l
            .0
            .lookup_by_token(&token)
            .ok_or((RevstrikeStatus::NotFound, format!("token {token} not issued")))?;
        *out_id = into_c_string(&id);
        *out_field = into_c_string(field.name());
        Ok(())
    })
}

/// Stores a Phase-1 report from `scanner`, records every tainted flow it
/// reveals and writes their number to `out_flows`.
///
/// # Safety
/// `l` is a live handle, `scanner` NUL-terminated, `report` points to `len`
/// readable bytes, `out_flows` is writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_ledger_ingest_report(
    l: *const RevstrikeLedger,
    scanner: *const c_char,
    round: u32,
    report: *const u8,
    len: usize,
    out_flows: *mut usize,
) -> RevstrikeStatus {
    guard(|| {
        let l = l.as_ref().ok_or((RevstrikeStatus::NullArgument, "ledger is null".into()))?;
        let scanner = str_arg(scanner, "scanner")?;
        let report = bytes_arg(report, len, "report")?;
        let out = out_arg(out_flows, "out_flows")?;
        let art = l
            .0
            .save_artifact(scanner, 1, round, &format!("ffi-r{round}"), report)
            .map_err(ledger_err)?;
        let mut n = 0;
        for flow in find_tainted_flows(&art, &l.0) {
            l.0.record_tainted(flow).map_err(ledger_err)?;
            n += 1;
        }
        *out = n;
        Ok(())
    })
}

/// Verifies every journal in the campaign directory.
///
/// # Safety
/// `dir` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_ledger_audit(dir: *const c_char, out: *mut RevstrikeAudit) -> RevstrikeStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let out = out_arg(out, "out")?;
        let r = audit(Path::new(dir)).map_err(|e| (RevstrikeStatus::IoError, e.to_string()))?;
        *out = RevstrikeAudit {
            records_checked: r.records_checked,
            mutated: r.mutated.len(),
            malformed: r.malformed.len(),
            partial_tails: r.partial_tails.len(),
            referential: r.referential.len(),
            clean: r.is_clean(),
        };
        Ok(())
    })
}

/// Whether `payload` reached an executable position in the report.
///
/// # Safety
/// `report` points to `len` readable bytes, `payload` is NUL-terminated and
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn revstrike_check_static(
    report: *const u8,
    len: usize,
    payload: *const c_char,
    out: *mut RevstrikeVerdict,
) -> RevstrikeStatus {
    guard(|| {
        let report = bytes_arg(report, len, "report")?;
        let payload = str_arg(payload, "payload")?;
        let out = out_arg(out, "out")?;
        let p = Payload::new("ffi", payload, []);
        let v = check_exploit_static(report, &p).map_err(|e| (RevstrikeStatus::CheckFailed, e.to_string()))?;
        *out = RevstrikeVerdict {
            confirmed: v.confirmed,
            reason: into_c_string(v.reason.as_str()),
        };
        Ok(())
    })
}
