//! C ABI over `cbrowse-core`.
//!
//! Every fallible function returns a [`CbStatus`]; on failure a message is
//! available from [`cb_last_error`] on the same thread. Strings handed out
//! by the library are owned by the caller and released with
//! [`cb_string_free`]. A [`CbIndex`] is immutable after opening and may be
//! shared across threads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};

use cbrowse::corpus::{ingest_corpus, load_corpus, CorpusIndex, FieldKind};
use cbrowse::metrics::{evaluate, mann_whitney_u, EvaluationOptions};
use cbrowse::ranking::{
    build_context_boosts, expand_filter, rank_contextual, rank_default, rank_similar, RankingConfig, StratagemKind,
    StratagemQuery, Thesaurus,
};
use cbrowse::session::{assign_arm, read_log, ExperimentArm, SessionContext};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidInput = 4,
    NotFound = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbArm {
    Baseline = 0,
    Similarity = 1,
    SessionContext = 2,
}

impl From<ExperimentArm> for CbArm {
    fn from(a: ExperimentArm) -> Self {
        match a {
            ExperimentArm::Baseline => CbArm::Baseline,
            ExperimentArm::Similarity => CbArm::Similarity,
            ExperimentArm::SessionContext => CbArm::SessionContext,
        }
    }
}

impl From<CbArm> for ExperimentArm {
    fn from(a: CbArm) -> Self {
        match a {
            CbArm::Baseline => ExperimentArm::Baseline,
            CbArm::Similarity => ExperimentArm::Similarity,
            CbArm::SessionContext => ExperimentArm::SessionContext,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CbMannWhitney {
    pub u: f64,
    pub z: f64,
    pub p: f64,
    pub r: f64,
}

/// Opaque corpus index with its thesaurus and ranking configuration.
pub struct CbIndex {
    index: CorpusIndex,
    thesaurus: Thesaurus,
    ranking: RankingConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(CbStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail(status: CbStatus, msg: impl ToString) -> Failure {
    Failure(status, msg.to_string())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> CbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CbStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CbStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(fail(CbStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

fn out_ptr<T>(p: *mut T, what: &str) -> FfiResult<()> {
    if p.is_null() {
        Err(fail(CbStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn index_ref<'a>(p: *const CbIndex) -> FfiResult<&'a CbIndex> {
    p.as_ref().ok_or_else(|| fail(CbStatus::NullArgument, "index is null"))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> FfiResult<&'a [f64]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(CbStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(CbStatus::InvalidInput, "output contains NUL"))
}

fn field_kind(s: &str) -> FfiResult<FieldKind> {
    FieldKind::ALL
        .into_iter()
        .find(|f| f.as_str() == s)
        .ok_or_else(|| fail(CbStatus::InvalidInput, format!("unknown field {s:?}")))
}

fn build_index(index: CorpusIndex, thesaurus: Option<&str>) -> FfiResult<Box<CbIndex>> {
    let thesaurus = match thesaurus {
        Some(p) => Thesaurus::load(p).map_err(|e| fail(CbStatus::Io, e))?,
        None => Thesaurus::new(),
    };
    Ok(Box::new(CbIndex {
        index,
        thesaurus,
        ranking: RankingConfig::default(),
    }))
}

/// Opens a JSON-lines corpus. `thesaurus_path` may be null. Malformed
/// corpus lines are skipped; duplicate ids are an error.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_index_open(
    corpus_path: *const c_char,
    thesaurus_path: *const c_char,
    out: *mut *mut CbIndex,
) -> CbStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let corpus = text(corpus_path, "corpus_path")?;
        let thesaurus = optional_text(thesaurus_path, "thesaurus_path")?;
        let ingested = load_corpus(corpus).map_err(|e| fail(CbStatus::Io, e))?;
        *out = Box::into_raw(build_index(ingested.index, thesaurus)?);
        Ok(())
    })
}

/// Builds an index from JSON-lines text held in memory.
///
/// # Safety
/// `jsonl` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_index_from_jsonl(jsonl: *const c_char, out: *mut *mut CbIndex) -> CbStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let body = text(jsonl, "jsonl")?;
        let ingested = ingest_corpus(body.as_bytes()).map_err(|e| fail(CbStatus::InvalidInput, e))?;
        *out = Box::into_raw(build_index(ingested.index, None)?);
        Ok(())
    })
}

/// # Safety
/// `index` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cb_index_free(index: *mut CbIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Number of documents, 0 for a null index.
///
/// # Safety
/// `index` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn cb_index_doc_count(index: *const CbIndex) -> usize {
    index.as_ref().map_or(0, |i| i.index.doc_count())
}

/// `tf × idf` of `term` in `field` of one document. `field` is one of
/// `title`, `abstract`, `author`, `keyword`, `keyword_free`, `category`,
/// `journal`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cb_tf_idf(
    index: *const CbIndex,
    term: *const c_char,
    field: *const c_char,
    doc_id: *const c_char,
    out: *mut f64,
) -> CbStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let idx = index_ref(index)?;
        let field = field_kind(text(field, "field")?)?;
        let v = idx
            .index
            .tf_idf(text(term, "term")?, field, text(doc_id, "doc_id")?)
            .map_err(|e| fail(CbStatus::NotFound, e))?;
        *out = v;
        Ok(())
    })
}

/// Ranks a stratagem under `arm` and writes the ranked list as JSON.
/// `kind` is `keyword`, `author`, `category` or `journal`. `context_json`
/// is a session context object and may be null (empty context); it only
/// affects the session-context arm.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_rank(
    index: *const CbIndex,
    arm: CbArm,
    kind: *const c_char,
    value: *const c_char,
    seed_doc_id: *const c_char,
    context_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CbStatus {
    guard(|| {
        out_ptr(out_json, "out_json")?;
        let idx = index_ref(index)?;
        let kind: StratagemKind = text(kind, "kind")?
            .parse()
            .map_err(|e| fail(CbStatus::InvalidInput, e))?;
        let query = StratagemQuery::new(kind, text(value, "value")?, text(seed_doc_id, "seed_doc_id")?)
            .map_err(|e| fail(CbStatus::InvalidInput, e))?;
        let ctx: SessionContext = match optional_text(context_json, "context_json")? {
            Some(s) => serde_json::from_str(s).map_err(|e| fail(CbStatus::InvalidInput, e))?,
            None => SessionContext::default(),
        };
        let eq = expand_filter(&query, &idx.thesaurus, &idx.ranking);
        let list = match ExperimentArm::from(arm) {
            ExperimentArm::Baseline => rank_default(&eq, &idx.index),
            ExperimentArm::Similarity => {
                rank_similar(&eq, &idx.index, &idx.ranking.similarity).map_err(|e| fail(CbStatus::NotFound, e))?
            }
            ExperimentArm::SessionContext => {
                rank_contextual(&eq, &build_context_boosts(&ctx, &idx.ranking.context), &idx.index)
            }
        };
        let json = serde_json::to_string(&list).map_err(|e| fail(CbStatus::InvalidInput, e))?;
        *out_json = to_c_string(json)?;
        Ok(())
    })
}

/// Evaluates a transaction log file and writes the metric report as JSON.
/// Malformed log lines are skipped.
///
/// # Safety
/// `log_path` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_evaluate_log(log_path: *const c_char, out_json: *mut *mut c_char) -> CbStatus {
    guard(|| {
        out_ptr(out_json, "out_json")?;
        let path = text(log_path, "log_path")?;
        let file = File::open(path).map_err(|e| fail(CbStatus::Io, format!("{path}: {e}")))?;
        let (events, _) = read_log(BufReader::new(file)).map_err(|e| fail(CbStatus::Io, e))?;
        let report = evaluate(&events, &EvaluationOptions::default());
        let json = serde_json::to_string(&report).map_err(|e| fail(CbStatus::InvalidInput, e))?;
        *out_json = to_c_string(json)?;
        Ok(())
    })
}

/// Two-sided Mann-Whitney U test of `a` against `b`.
///
/// # Safety
/// `a` and `b` must hold `n_a` and `n_b` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_mann_whitney(
    a: *const f64,
    n_a: usize,
    b: *const f64,
    n_b: usize,
    out: *mut CbMannWhitney,
) -> CbStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let mw = mann_whitney_u(slice(a, n_a, "a")?, slice(b, n_b, "b")?)
            .map_err(|e| fail(CbStatus::InvalidInput, e))?;
        *out = CbMannWhitney {
            u: mw.u,
            z: mw.z,
            p: mw.p,
            r: mw.r,
        };
        Ok(())
    })
}

/// Deterministic arm for a session id under `seed`.
///
/// # Safety
/// `session_id` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_assign_arm(session_id: *const c_char, seed: u64, out: *mut CbArm) -> CbStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = assign_arm(text(session_id, "session_id")?, seed).into();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn cb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn cb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
