//! C ABI over `oca-core`.
//!
//! Every fallible call returns an [`OcaStatus`]. On failure a message is kept
//! per thread and can be read with [`oca_last_error_message`] until the next
//! failing call on that thread. Objects are opaque handles that the caller
//! releases with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use oca_core::embedding::normalize;
use oca_core::eval::auroc;
use oca_core::labelset::{LabelEmbeddings, LabelSet, LabelSetError};
use oca_core::mixture::mixture_score;
use oca_core::oceb::{load_store, EmbeddingStore, OcebError};
use oca_core::scoring::{identity_residual, joint_logits, score, JointLogits, Method, ScoreConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Labels = 5,
    Score = 6,
    Panic = 7,
}

/// Scoring methods, in the order the CLI reports them. Functions take the
/// numeric value as `uint32_t`; anything else is rejected.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcaMethod {
    NegMaxProb = 0,
    SumOutProb = 1,
    MaxOutProb = 2,
    NegMaxInProb = 3,
    MaxLogitDiff = 4,
}

impl From<OcaMethod> for Method {
    fn from(m: OcaMethod) -> Self {
        match m {
            OcaMethod::NegMaxProb => Method::NegMaxProb,
            OcaMethod::SumOutProb => Method::SumOutProb,
            OcaMethod::MaxOutProb => Method::MaxOutProb,
            OcaMethod::NegMaxInProb => Method::NegMaxInProb,
            OcaMethod::MaxLogitDiff => Method::MaxLogitDiff,
        }
    }
}

/// An embedding store loaded from an OCEB file.
pub struct OcaStore(EmbeddingStore);

/// Class embeddings of a label set, ready to score image embeddings.
pub struct OcaScorer(LabelEmbeddings);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type Failure = (OcaStatus, String);

fn fail(status: OcaStatus, msg: impl Into<String>) -> Failure {
    (status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OcaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OcaStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(OcaStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(OcaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn score_err(e: impl ToString) -> Failure {
    fail(OcaStatus::Score, e.to_string())
}

fn config(method: u32, temperature: f64) -> Result<ScoreConfig, Failure> {
    let m = *Method::ALL.get(method as usize).ok_or_else(|| {
        fail(
            OcaStatus::InvalidArgument,
            format!("unknown method {method}"),
        )
    })?;
    ScoreConfig::new(m, temperature).map_err(|e| fail(OcaStatus::InvalidArgument, e.to_string()))
}

fn oceb_status(e: &OcebError) -> OcaStatus {
    match e {
        OcebError::Io { .. } => OcaStatus::Io,
        _ => OcaStatus::Format,
    }
}

/// Message for the last failure on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn oca_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version and supported OCEB format, as a static string.
#[no_mangle]
pub extern "C" fn oca_version() -> *const c_char {
    static VERSION: &CStr = c"0.1.0 (OCEB format v1)";
    VERSION.as_ptr()
}

/// Loads an OCEB file and its sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn oca_store_load(path: *const c_char, out: *mut *mut OcaStore) -> OcaStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = c_str(path, "path")?;
        let store =
            load_store(Path::new(path)).map_err(|e| fail(oceb_status(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(OcaStore(store)));
        Ok(())
    })
}

/// # Safety
/// `store` must be null or a handle from [`oca_store_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oca_store_free(store: *mut OcaStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be null or a live handle. Returns 0 for null.
#[no_mangle]
pub unsafe extern "C" fn oca_store_dim(store: *const OcaStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.dim())
}

/// # Safety
/// `store` must be null or a live handle. Returns 0 for null.
#[no_mangle]
pub unsafe extern "C" fn oca_store_count(store: *const OcaStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.len())
}

/// Copies record `index` into `out`, which must hold `len == dim` floats.
///
/// # Safety
/// `store` must be a live handle and `out` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn oca_store_vector(
    store: *const OcaStore,
    index: usize,
    out: *mut f32,
    len: usize,
) -> OcaStatus {
    guard(|| {
        non_null(store, "store")?;
        non_null(out, "out")?;
        let s = &(*store).0;
        if index >= s.len() {
            return Err(fail(
                OcaStatus::InvalidArgument,
                format!("index {index} out of range 0..{}", s.len()),
            ));
        }
        if len != s.dim() {
            return Err(fail(
                OcaStatus::InvalidArgument,
                format!("buffer holds {len} floats, dim is {}", s.dim()),
            ));
        }
        slice::from_raw_parts_mut(out, len).copy_from_slice(s.raw(index));
        Ok(())
    })
}

/// Builds a scorer from a text-embedding store and a label-set JSON document.
///
/// # Safety
/// `texts` must be a live store handle, `labels_json` a NUL-terminated
/// string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn oca_scorer_new(
    texts: *const OcaStore,
    labels_json: *const c_char,
    out: *mut *mut OcaScorer,
) -> OcaStatus {
    guard(|| {
        non_null(texts, "texts")?;
        non_null(out, "out")?;
        let json = c_str(labels_json, "labels_json")?;
        let labels =
            LabelSet::from_json(json).map_err(|e| fail(OcaStatus::Labels, e.to_string()))?;
        labels
            .check(false)
            .map_err(|e| fail(OcaStatus::Labels, e.to_string()))?;
        let emb = labels
            .embed(&(*texts).0)
            .map_err(|e: LabelSetError| fail(OcaStatus::Labels, e.to_string()))?;
        *out = Box::into_raw(Box::new(OcaScorer(emb)));
        Ok(())
    })
}

/// # Safety
/// `scorer` must be null or a handle from [`oca_scorer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oca_scorer_free(scorer: *mut OcaScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

/// Number of in-domain scoring classes. Returns 0 for null.
///
/// # Safety
/// `scorer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oca_scorer_n_in(scorer: *const OcaScorer) -> usize {
    scorer.as_ref().map_or(0, |s| s.0.in_names.len())
}

/// Number of OOD scoring classes. Returns 0 for null.
///
/// # Safety
/// `scorer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oca_scorer_n_out(scorer: *const OcaScorer) -> usize {
    scorer.as_ref().map_or(0, |s| s.0.out_names.len())
}

/// Scores one image embedding. The embedding is L2-normalized first.
///
/// # Safety
/// `scorer` must be a live handle, `embedding` must point to `dim` floats and
/// `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn oca_scorer_score(
    scorer: *const OcaScorer,
    embedding: *const f32,
    dim: usize,
    method: u32,
    temperature: f64,
    out: *mut f64,
) -> OcaStatus {
    guard(|| {
        non_null(scorer, "scorer")?;
        non_null(out, "out")?;
        let cfg = config(method, temperature)?;
        let raw: Vec<f64> = input(embedding, dim, "embedding")?
            .iter()
            .map(|&x| x as f64)
            .collect();
        let img = normalize(&raw).map_err(|e| fail(OcaStatus::InvalidArgument, e.to_string()))?;
        let labels = &(*scorer).0;
        if let Some(d) = labels.dim() {
            if d != dim {
                return Err(fail(
                    OcaStatus::InvalidArgument,
                    format!("embedding dim {dim}, classes have dim {d}"),
                ));
            }
        }
        let jl = joint_logits(&img, labels).map_err(score_err)?;
        *out = score(&jl, &cfg).map_err(score_err)?;
        Ok(())
    })
}

/// Scores a row of raw logits split into in-domain and OOD classes.
///
/// # Safety
/// `in_logits` and `out_logits` must point to `n_in` and `n_out` doubles and
/// `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn oca_score(
    in_logits: *const f64,
    n_in: usize,
    out_logits: *const f64,
    n_out: usize,
    method: u32,
    temperature: f64,
    out: *mut f64,
) -> OcaStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = config(method, temperature)?;
        let ins = input(in_logits, n_in, "in_logits")?.to_vec();
        let outs = input(out_logits, n_out, "out_logits")?.to_vec();
        let jl = JointLogits::new(ins, outs).map_err(score_err)?;
        *out = score(&jl, &cfg).map_err(score_err)?;
        Ok(())
    })
}

/// Both sides of the log decomposition of the in-domain maximum softmax
/// probability: `-ln(-neg_max_in_prob)` and `max_logit_diff + ln(1 + r)`.
///
/// # Safety
/// Logit pointers must point to `n_in` and `n_out` doubles; `lhs` and `rhs`
/// to one writable double each.
#[no_mangle]
pub unsafe extern "C" fn oca_identity_residual(
    in_logits: *const f64,
    n_in: usize,
    out_logits: *const f64,
    n_out: usize,
    temperature: f64,
    lhs: *mut f64,
    rhs: *mut f64,
) -> OcaStatus {
    guard(|| {
        non_null(lhs, "lhs")?;
        non_null(rhs, "rhs")?;
        let cfg = config(OcaMethod::NegMaxInProb as u32, temperature)?;
        let ins = input(in_logits, n_in, "in_logits")?.to_vec();
        let outs = input(out_logits, n_out, "out_logits")?.to_vec();
        let jl = JointLogits::new(ins, outs).map_err(score_err)?;
        let r = identity_residual(&jl, &cfg).map_err(score_err)?;
        *lhs = r.lhs;
        *rhs = r.rhs;
        Ok(())
    })
}

/// AUROC with `ood` as the positive class; ties count one half.
///
/// # Safety
/// `ood` and `ind` must point to `n_ood` and `n_ind` doubles and `out` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn oca_auroc(
    ood: *const f64,
    n_ood: usize,
    ind: *const f64,
    n_ind: usize,
    out: *mut f64,
) -> OcaStatus {
    guard(|| {
        non_null(out, "out")?;
        let a = input(ood, n_ood, "ood")?;
        let b = input(ind, n_ind, "ind")?;
        *out = auroc(a, b).map_err(|e| fail(OcaStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Spread `max - min` of per-box scores; needs at least two boxes.
///
/// # Safety
/// `per_box` must point to `n` doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn oca_mixture_score(
    per_box: *const f64,
    n: usize,
    out: *mut f64,
) -> OcaStatus {
    guard(|| {
        non_null(out, "out")?;
        let s = input(per_box, n, "per_box")?;
        if s.iter().any(|x| !x.is_finite()) {
            return Err(fail(
                OcaStatus::InvalidArgument,
                "per_box has a non-finite value",
            ));
        }
        *out = mixture_score(s).map_err(|e| fail(OcaStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}
