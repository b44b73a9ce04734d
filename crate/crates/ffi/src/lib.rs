//! C interface to the document tools, token accounting and the trajectory
//! auditor.
//!
//! Every fallible call returns a [`ForageStatus`]. On failure a message is
//! kept per thread and can be fetched with [`forage_last_error`]. Results
//! that carry structure are returned as JSON strings owned by the caller and
//! released with [`forage_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use forage_core::controller::{audit_trajectory, replay_trajectory, ReplayError, TrajectoryLog};
use forage_core::document::{
    Anchor, DocumentEnv, DocumentError, GrepRequest, ReadOptions, ScanRequest,
};
use forage_core::harness::token_efficiency;
use serde::Serialize;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForageStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Io = 5,
    Parse = 6,
    Replay = 7,
    Panic = 8,
}

/// Opaque handle to a document environment. Safe to share between threads.
pub struct ForageEnv(DocumentEnv);

struct Failure {
    status: ForageStatus,
    message: String,
}

impl Failure {
    fn new(status: ForageStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<DocumentError> for Failure {
    fn from(err: DocumentError) -> Self {
        let status = match &err {
            DocumentError::NotFound(_) => ForageStatus::NotFound,
            DocumentError::Io { .. } => ForageStatus::Io,
            _ => ForageStatus::InvalidArgument,
        };
        Self::new(status, err.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        Self::new(ForageStatus::Parse, err.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let message = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

/// Runs `body`, turning errors and panics into a status plus a stored
/// message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ForageStatus {
    let failure = match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => return ForageStatus::Ok,
        Ok(Err(failure)) => failure,
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Failure::new(ForageStatus::Panic, message)
        }
    };
    set_last_error(&failure.message);
    failure.status
}

/// # Safety
/// `ptr` is null or a valid NUL-terminated string.
unsafe fn text<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(
            ForageStatus::NullArgument,
            format!("{name} is null"),
        ));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::new(ForageStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// # Safety
/// `ptr` is null or a valid NUL-terminated string.
unsafe fn optional_text<'a>(ptr: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if ptr.is_null() {
        Ok(None)
    } else {
        text(ptr, name).map(Some)
    }
}

/// # Safety
/// `env` is null or a live handle from [`forage_env_new`].
unsafe fn env_ref<'a>(env: *const ForageEnv) -> Result<&'a DocumentEnv, Failure> {
    env.as_ref()
        .map(|e| &e.0)
        .ok_or_else(|| Failure::new(ForageStatus::NullArgument, "env is null"))
}

/// # Safety
/// `out` is null or valid for one pointer write.
unsafe fn write_json(out: *mut *mut c_char, value: &impl Serialize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(ForageStatus::NullArgument, "out is null"));
    }
    let json = serde_json::to_string(value)?;
    let json = CString::new(json).map_err(|e| Failure::new(ForageStatus::Parse, e.to_string()))?;
    *out = json.into_raw();
    Ok(())
}

/// Creates an empty document environment. Free it with
/// [`forage_env_free`].
#[no_mangle]
pub extern "C" fn forage_env_new() -> *mut ForageEnv {
    Box::into_raw(Box::new(ForageEnv(DocumentEnv::new())))
}

/// # Safety
/// `env` is null or a handle from [`forage_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn forage_env_free(env: *mut ForageEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Registers a text file and writes its handle as JSON to `out`. The
/// handle's `id` names the document in later calls.
///
/// # Safety
/// `env` is a live handle, `path` a NUL-terminated string and `out` valid
/// for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn forage_register(
    env: *const ForageEnv,
    path: *const c_char,
    out: *mut *mut c_char,
) -> ForageStatus {
    guard(|| {
        let env = env_ref(env)?;
        let handle = env.register_document(text(path, "path")?)?;
        write_json(out, &handle)
    })
}

/// Regex search over a registered document. `source` is a document id,
/// path or file name. A `max_matches` of 0 keeps the default cap. Writes
/// the match list as JSON.
///
/// # Safety
/// `env` is a live handle, `source` and `pattern` NUL-terminated strings and
/// `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn forage_grep(
    env: *const ForageEnv,
    source: *const c_char,
    pattern: *const c_char,
    case_insensitive: bool,
    context: usize,
    max_matches: usize,
    out: *mut *mut c_char,
) -> ForageStatus {
    guard(|| {
        let env = env_ref(env)?;
        let id = env.resolve(text(source, "source")?)?;
        let mut request = GrepRequest::new(text(pattern, "pattern")?)
            .case_insensitive(case_insensitive)
            .context(context);
        if max_matches > 0 {
            request = request.max_matches(max_matches);
        }
        write_json(out, &env.grep(&id, &request)?)
    })
}

/// Anchors of every line matching `pattern`, as a JSON array of strings.
///
/// # Safety
/// As for [`forage_grep`].
#[no_mangle]
pub unsafe extern "C" fn forage_scan(
    env: *const ForageEnv,
    source: *const c_char,
    pattern: *const c_char,
    out: *mut *mut c_char,
) -> ForageStatus {
    guard(|| {
        let env = env_ref(env)?;
        let id = env.resolve(text(source, "source")?)?;
        let anchors = env.scan(&id, &ScanRequest::new(text(pattern, "pattern")?))?;
        write_json(out, &anchors)
    })
}

/// Reads the lines under an anchor such as `notes.txt:10-20`. The document
/// part may be an id, path or file name. A `limit` of 0 reads the whole
/// span. Writes the observation as JSON.
///
/// # Safety
/// `env` is a live handle, `anchor` a NUL-terminated string and `out` valid
/// for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn forage_read(
    env: *const ForageEnv,
    anchor: *const c_char,
    limit: usize,
    out: *mut *mut c_char,
) -> ForageStatus {
    guard(|| {
        let env = env_ref(env)?;
        let mut anchor: Anchor = text(anchor, "anchor")?.parse().map_err(
            |e: forage_core::document::AnchorParseError| {
                Failure::new(ForageStatus::InvalidArgument, e.to_string())
            },
        )?;
        anchor.doc = env.resolve(anchor.doc.as_str())?;
        let options = if limit > 0 {
            ReadOptions::limit(limit)
        } else {
            ReadOptions::default()
        };
        write_json(out, &env.read(&anchor, &options)?)
    })
}

/// Counts tokens in `text`. `tokenizer` names the tokenizer or is null for
/// the default.
///
/// # Safety
/// `env` is a live handle, `text_ptr` a NUL-terminated string, `tokenizer`
/// null or a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn forage_count_tokens(
    env: *const ForageEnv,
    text_ptr: *const c_char,
    tokenizer: *const c_char,
    out: *mut usize,
) -> ForageStatus {
    guard(|| {
        let env = env_ref(env)?;
        let count = env.count_tokens(
            text(text_ptr, "text")?,
            optional_text(tokenizer, "tokenizer")?,
        )?;
        if out.is_null() {
            return Err(Failure::new(ForageStatus::NullArgument, "out is null"));
        }
        *out = count;
        Ok(())
    })
}

/// Accuracy points per thousand tokens.
///
/// # Safety
/// `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn forage_token_efficiency(
    accuracy_percent: f64,
    mean_cost_k: f64,
    out: *mut f64,
) -> ForageStatus {
    guard(|| {
        let value = token_efficiency(accuracy_percent, mean_cost_k)
            .map_err(|e| Failure::new(ForageStatus::InvalidArgument, e.to_string()))?;
        if out.is_null() {
            return Err(Failure::new(ForageStatus::NullArgument, "out is null"));
        }
        *out = value;
        Ok(())
    })
}

fn parse_log(jsonl: &str) -> Result<TrajectoryLog, Failure> {
    Ok(TrajectoryLog::from_jsonl(jsonl)?)
}

/// Checks a JSONL trajectory against the state mutation rules. Writes
/// `{"steps_checked": n, "violations": [...]}`.
///
/// # Safety
/// `trajectory` is a NUL-terminated string and `out` valid for one pointer
/// write.
#[no_mangle]
pub unsafe extern "C" fn forage_audit(
    trajectory: *const c_char,
    out: *mut *mut c_char,
) -> ForageStatus {
    guard(|| {
        let log = parse_log(text(trajectory, "trajectory")?)?;
        write_json(out, &audit_trajectory(&log))
    })
}

#[derive(Serialize)]
struct ReplaySummary<'a> {
    faithful: bool,
    steps: usize,
    answer: &'a str,
    audit: &'a forage_core::controller::AuditReport,
    divergence: &'a Option<forage_core::controller::Divergence>,
}

/// Re-executes a JSONL trajectory offline against its document and reports
/// whether it reproduces. `doc_root` is null or a directory for a relative
/// document path.
///
/// # Safety
/// `env` is a live handle, `trajectory` a NUL-terminated string, `doc_root`
/// null or a NUL-terminated string and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn forage_replay(
    env: *const ForageEnv,
    trajectory: *const c_char,
    doc_root: *const c_char,
    out: *mut *mut c_char,
) -> ForageStatus {
    guard(|| {
        let env = env_ref(env)?;
        let log = parse_log(text(trajectory, "trajectory")?)?;
        let root = optional_text(doc_root, "doc_root")?.map(Path::new);
        let replay = replay_trajectory(&log, root, env).map_err(|e| {
            let status = match e {
                ReplayError::MissingHeader | ReplayError::MissingFooter => ForageStatus::Parse,
                ReplayError::Episode(_) => ForageStatus::Replay,
            };
            Failure::new(status, e.to_string())
        })?;
        write_json(
            out,
            &ReplaySummary {
                faithful: replay.is_faithful(),
                steps: replay.run.result.steps_used,
                answer: &replay.run.result.answer,
                audit: &replay.audit,
                divergence: &replay.divergence,
            },
        )
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn forage_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned through an `out` parameter.
///
/// # Safety
/// `s` is null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn forage_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
