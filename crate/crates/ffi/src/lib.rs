//! C ABI over the cold-start selection engine.
//!
//! Every fallible function returns a [`CalStatus`]. On failure a message is
//! kept per thread and can be read with [`cal_last_error`]. Handles are
//! opaque and must be released with their `_free` function. No function
//! unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use coldstart_al::classifier::predictive_entropy;
use coldstart_al::clustering::{self, Init};
use coldstart_al::corpus::{load_dataset, Corpus, DatasetFormat};
use coldstart_al::embeddings::{gradient_embedding, SurprisalTable};
use coldstart_al::strategies::{sample_alps, ClusterOptions};
use coldstart_al::surprisal_lm::{load_external_nll, LmConfig, NgramLm, NllTable};
use coldstart_al::{seed, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    BufferTooSmall = 6,
    DimensionMismatch = 7,
    Panic = 8,
    Internal = 9,
}

/// k-means seeding for [`cal_sampler_select`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalInit {
    KMeansPlusPlus = 0,
    Random = 1,
}

/// Dataset file format for [`cal_corpus_load`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalFormat {
    /// Guess from the file extension.
    Auto = 0,
    Jsonl = 1,
    Tsv = 2,
}

/// A tokenized corpus.
pub struct CalCorpus {
    corpus: Corpus,
    ids: Vec<CString>,
}

/// Per-token NLLs for every sentence of a corpus plus the token fraction.
pub struct CalSampler {
    nll: NllTable,
    token_fraction: f64,
    len: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> CalStatus {
    match err {
        Error::Io { .. } => CalStatus::Io,
        Error::Parse { .. } | Error::Json(_) => CalStatus::Parse,
        Error::DimensionMismatch { .. } => CalStatus::DimensionMismatch,
        _ => CalStatus::InvalidArgument,
    }
}

struct Fail(CalStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(status: CalStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

/// Run `f`, translating errors and panics into a status plus a message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CalStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CalStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CalStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(fail(CalStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CalStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

/// A slice view that tolerates a null pointer when `len == 0`.
unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn cal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load and tokenize a dataset. `max_len` 0 selects the default of 128.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cal_corpus_load(
    path: *const c_char,
    format: CalFormat,
    max_len: usize,
    min_count: usize,
    out: *mut *mut CalCorpus,
) -> CalStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = Path::new(str_arg(path, "path")?);
        let format = match format {
            CalFormat::Auto => DatasetFormat::from_path(path),
            CalFormat::Jsonl => DatasetFormat::Jsonl,
            CalFormat::Tsv => DatasetFormat::Tsv,
        };
        let max_len = if max_len == 0 {
            coldstart_al::config::DEFAULT_MAX_LEN
        } else {
            max_len
        };
        let dataset = load_dataset(path, format)?;
        let corpus = Corpus::build(&dataset, max_len, min_count.max(1))?;
        let ids = corpus
            .seqs
            .iter()
            .map(|s| CString::new(s.id.replace('\0', " ")).expect("interior nuls removed"))
            .collect();
        *out = Box::into_raw(Box::new(CalCorpus { corpus, ids }));
        Ok(())
    })
}

/// Number of sentences, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle from [`cal_corpus_load`].
#[no_mangle]
pub unsafe extern "C" fn cal_corpus_len(corpus: *const CalCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.corpus.len())
}

/// Id of sentence `idx`, or null when out of range. The string lives as
/// long as the handle.
///
/// # Safety
/// `corpus` must be null or a live handle from [`cal_corpus_load`].
#[no_mangle]
pub unsafe extern "C" fn cal_corpus_id(corpus: *const CalCorpus, idx: usize) -> *const c_char {
    clear_error();
    match corpus.as_ref() {
        None => {
            set_error("`corpus` is null");
            ptr::null()
        }
        Some(c) => match c.ids.get(idx) {
            Some(id) => id.as_ptr(),
            None => {
                set_error(format!("index {idx} out of range for {} sentences", c.ids.len()));
                ptr::null()
            }
        },
    }
}

/// # Safety
/// `corpus` must be null or a handle from [`cal_corpus_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cal_corpus_free(corpus: *mut CalCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

fn check_fraction(p: f64) -> Result<(), Fail> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(fail(
            CalStatus::InvalidArgument,
            format!("token fraction must lie in (0, 1], got {p}"),
        ))
    }
}

/// Build a sampler from a bidirectional n-gram model trained on the whole
/// corpus. `order` 0 and nonpositive `alpha` select the defaults; a
/// `lambda` outside [0, 1] is rejected.
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cal_sampler_new_ngram(
    corpus: *const CalCorpus,
    order: usize,
    alpha: f64,
    lambda: f64,
    token_fraction: f64,
    out: *mut *mut CalSampler,
) -> CalStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(corpus, "corpus")?;
        check_fraction(token_fraction)?;
        let c = &(*corpus).corpus;
        let defaults = LmConfig::default();
        let cfg = LmConfig {
            order: if order == 0 { defaults.order } else { order },
            alpha: if alpha > 0.0 { alpha } else { defaults.alpha },
            lambda,
        };
        let lm = NgramLm::train(c.seqs.iter(), c.vocab.len(), cfg)?;
        let nll = NllTable::from_lm(&lm, c);
        *out = Box::into_raw(Box::new(CalSampler {
            nll,
            token_fraction,
            len: c.len(),
        }));
        Ok(())
    })
}

/// Build a sampler from an NLL JSONL file covering every sentence.
///
/// # Safety
/// `corpus` must be a live handle, `nll_path` a nul-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cal_sampler_new_from_nll(
    corpus: *const CalCorpus,
    nll_path: *const c_char,
    token_fraction: f64,
    out: *mut *mut CalSampler,
) -> CalStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(corpus, "corpus")?;
        check_fraction(token_fraction)?;
        let c = &(*corpus).corpus;
        let path = Path::new(str_arg(nll_path, "nll_path")?);
        let nll = NllTable::from_map(load_external_nll(path, c)?, c)?;
        *out = Box::into_raw(Box::new(CalSampler {
            nll,
            token_fraction,
            len: c.len(),
        }));
        Ok(())
    })
}

/// Select `k` sentences from the candidates (all sentences when
/// `candidates` is null) by clustering surprisal embeddings. Writes `k`
/// corpus indices, or every candidate when fewer than `k` remain, and
/// stores the count in `written`. `out` must hold at least `k` entries.
///
/// # Safety
/// `sampler` must be a live handle; `candidates` null or `n_candidates`
/// readable entries; `out` `out_cap` writable entries; `written` valid.
#[no_mangle]
pub unsafe extern "C" fn cal_sampler_select(
    sampler: *const CalSampler,
    candidates: *const usize,
    n_candidates: usize,
    k: usize,
    seed: u64,
    init: CalInit,
    out: *mut usize,
    out_cap: usize,
    written: *mut usize,
) -> CalStatus {
    guard(|| {
        non_null(sampler, "sampler")?;
        non_null(written, "written")?;
        *written = 0;
        let s = &*sampler;
        if k == 0 {
            return Err(fail(CalStatus::InvalidArgument, "k must be at least 1"));
        }
        let pool: Vec<usize> = if candidates.is_null() {
            (0..s.len).collect()
        } else {
            let c = slice_arg(candidates, n_candidates, "candidates")?;
            if let Some(&bad) = c.iter().find(|&&i| i >= s.len) {
                return Err(fail(
                    CalStatus::InvalidArgument,
                    format!("candidate {bad} out of range for {} sentences", s.len),
                ));
            }
            c.to_vec()
        };
        if out_cap < k.min(pool.len()) {
            return Err(fail(
                CalStatus::BufferTooSmall,
                format!("output holds {out_cap} entries, need {}", k.min(pool.len())),
            ));
        }
        non_null(out, "out")?;
        let opts = ClusterOptions {
            init: match init {
                CalInit::KMeansPlusPlus => Init::KMeansPlusPlus,
                CalInit::Random => Init::Random,
            },
            ..ClusterOptions::default()
        };
        let table = SurprisalTable::build_subset(
            &s.nll,
            pool.iter().copied(),
            s.token_fraction,
            seed::derive_seed_str(seed, "surprisal"),
        )?;
        let picks = sample_alps(&pool, &table, k, seed, opts)?;
        let dst = slice::from_raw_parts_mut(out, out_cap);
        dst[..picks.len()].copy_from_slice(&picks);
        *written = picks.len();
        Ok(())
    })
}

/// # Safety
/// `sampler` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cal_sampler_free(sampler: *mut CalSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Last-layer gradient embedding for the predicted label. `out` receives
/// `n_classes * hidden_dim` values; `predicted` may be null.
///
/// # Safety
/// Pointers must reference the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn cal_gradient_embedding(
    confidences: *const f64,
    n_classes: usize,
    hidden: *const f64,
    hidden_dim: usize,
    out: *mut f64,
    out_len: usize,
    predicted: *mut usize,
) -> CalStatus {
    guard(|| {
        let conf = slice_arg(confidences, n_classes, "confidences")?;
        let h = slice_arg(hidden, hidden_dim, "hidden")?;
        let need = n_classes * hidden_dim;
        if out_len < need {
            return Err(fail(
                CalStatus::BufferTooSmall,
                format!("output holds {out_len} values, need {need}"),
            ));
        }
        let g = gradient_embedding(conf, h)?;
        if need > 0 {
            non_null(out, "out")?;
            slice::from_raw_parts_mut(out, need).copy_from_slice(&g.values);
        }
        if !predicted.is_null() {
            *predicted = g.predicted;
        }
        Ok(())
    })
}

/// Shannon entropy in nats of a probability vector.
///
/// # Safety
/// `proba` must reference `n` readable values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn cal_predictive_entropy(
    proba: *const f64,
    n: usize,
    out: *mut f64,
) -> CalStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = slice_arg(proba, n, "proba")?;
        if p.is_empty() {
            return Err(fail(CalStatus::InvalidArgument, "empty probability vector"));
        }
        if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(fail(
                CalStatus::InvalidArgument,
                "probabilities must be finite and nonnegative",
            ));
        }
        *out = predictive_entropy(p);
        Ok(())
    })
}

/// Mean silhouette of `n` row-major points of dimension `dim`.
///
/// # Safety
/// `points` must reference `n * dim` values, `assignment` `n` values, and
/// `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn cal_silhouette(
    points: *const f64,
    n: usize,
    dim: usize,
    assignment: *const usize,
    out: *mut f64,
) -> CalStatus {
    guard(|| {
        non_null(out, "out")?;
        if dim == 0 {
            return Err(fail(CalStatus::InvalidArgument, "dim must be at least 1"));
        }
        let flat = slice_arg(points, n * dim, "points")?;
        let assign = slice_arg(assignment, n, "assignment")?;
        let rows: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        *out = clustering::silhouette(&rows, assign)?;
        Ok(())
    })
}
