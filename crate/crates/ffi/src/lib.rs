//! C ABI over the snapshot store, ensemble construction and metrics.
//!
//! Every function returns a [`BagstackStatus`]. On failure the message is
//! kept per thread and read with [`bagstack_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bagstack::ensemble::{aggregate, evaluate_ensemble, rebuild, EnsembleConfig, EnsembleModel};
use bagstack::matrix::{BinaryMatrix, ProbMatrix};
use bagstack::metrics::{full_report, Conventions, MetricsReport};
use bagstack::store::SnapshotStore;
use bagstack::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BagstackStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    Shape = 5,
    Selection = 6,
    Diverged = 7,
    Panic = 8,
}

/// An opened snapshot store.
pub struct BagstackStore(SnapshotStore);

/// A resolved ensemble selection with its provenance.
pub struct BagstackEnsemble(EnsembleModel);

/// A row-major documents x labels probability matrix.
pub struct BagstackMatrix(ProbMatrix);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BagstackMetrics {
    pub hamming_loss: f64,
    pub instance_f1: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub bce: f64,
}

impl From<&MetricsReport> for BagstackMetrics {
    fn from(r: &MetricsReport) -> Self {
        BagstackMetrics {
            hamming_loss: r.hamming_loss,
            instance_f1: r.instance_f1,
            macro_f1: r.macro_f1,
            micro_f1: r.micro_f1,
            bce: r.bce,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn status_of(e: &Error) -> BagstackStatus {
    match e {
        Error::Io { .. } => BagstackStatus::Io,
        Error::Parse { .. } | Error::Invalid(_) | Error::Json(_) => BagstackStatus::InvalidInput,
        Error::Shape(_) => BagstackStatus::Shape,
        Error::Selection(_) => BagstackStatus::Selection,
        Error::Diverged(_) => BagstackStatus::Diverged,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BagstackStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BagstackStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            BagstackStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(what))) => {
            set_error(format!("{what} is not valid UTF-8"));
            BagstackStatus::InvalidUtf8
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BagstackStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

fn out_arg<T>(p: *mut T, what: &'static str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bagstack_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bagstack_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bagstack_store_open(path: *const c_char, out: *mut *mut BagstackStore) -> BagstackStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let store = SnapshotStore::open(Path::new(path))?;
        *out = Box::into_raw(Box::new(BagstackStore(store)));
        Ok(())
    })
}

/// # Safety
/// `store` must come from [`bagstack_store_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn bagstack_store_free(store: *mut BagstackStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Number of snapshots, validation documents and labels.
///
/// # Safety
/// `store` must be a live handle; the out pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn bagstack_store_shape(
    store: *const BagstackStore,
    n_snapshots: *mut usize,
    n_docs: *mut usize,
    n_labels: *mut usize,
) -> BagstackStatus {
    guard(|| {
        let s = &ref_arg(store, "store")?.0;
        for (p, v) in [(n_snapshots, s.len()), (n_docs, s.doc_ids().len()), (n_labels, s.labels().len())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Builds an ensemble from TOML settings (the same keys as an ensemble
/// config file, e.g. `strategy = "bag-samples"` and `n = 3`). An empty
/// string selects the default meta-ensemble.
///
/// # Safety
/// `store` must be a live handle, `config` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn bagstack_ensemble_build(
    store: *const BagstackStore,
    config: *const c_char,
    out: *mut *mut BagstackEnsemble,
) -> BagstackStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = &ref_arg(store, "store")?.0;
        let cfg = EnsembleConfig::parse(str_arg(config, "config")?)?;
        let e = cfg.build(s)?;
        *out = Box::into_raw(Box::new(BagstackEnsemble(e)));
        Ok(())
    })
}

/// Rebuilds a recorded `ensemble.json` against `store`, failing if the store
/// no longer yields the recorded selection.
///
/// # Safety
/// As for [`bagstack_ensemble_build`]; `json` is the recorded document.
#[no_mangle]
pub unsafe extern "C" fn bagstack_ensemble_from_json(
    store: *const BagstackStore,
    json: *const c_char,
    out: *mut *mut BagstackEnsemble,
) -> BagstackStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = &ref_arg(store, "store")?.0;
        let recorded: EnsembleModel = serde_json::from_str(str_arg(json, "json")?).map_err(Error::from)?;
        let e = rebuild(&recorded, s)?;
        *out = Box::into_raw(Box::new(BagstackEnsemble(e)));
        Ok(())
    })
}

/// # Safety
/// `ensemble` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn bagstack_ensemble_free(ensemble: *mut BagstackEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// # Safety
/// `ensemble` must be a live handle and `n_members` writable.
#[no_mangle]
pub unsafe extern "C" fn bagstack_ensemble_len(ensemble: *const BagstackEnsemble, n_members: *mut usize) -> BagstackStatus {
    guard(|| {
        let out = out_arg(n_members, "n_members")?;
        *out = ref_arg(ensemble, "ensemble")?.0.selection.len();
        Ok(())
    })
}

/// The ensemble with its provenance as JSON; release with
/// [`bagstack_string_free`].
///
/// # Safety
/// `ensemble` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bagstack_ensemble_to_json(
    ensemble: *const BagstackEnsemble,
    out: *mut *mut c_char,
) -> BagstackStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = serde_json::to_string_pretty(&ref_arg(ensemble, "ensemble")?.0).map_err(Error::from)?;
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn bagstack_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Mean of the members' validation predictions.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bagstack_ensemble_aggregate(
    ensemble: *const BagstackEnsemble,
    store: *const BagstackStore,
    out: *mut *mut BagstackMatrix,
) -> BagstackStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = aggregate(&ref_arg(ensemble, "ensemble")?.0, &ref_arg(store, "store")?.0)?;
        *out = Box::into_raw(Box::new(BagstackMatrix(m)));
        Ok(())
    })
}

/// Scores the ensemble against the store's validation truth.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bagstack_ensemble_evaluate(
    ensemble: *const BagstackEnsemble,
    store: *const BagstackStore,
    out: *mut BagstackMetrics,
) -> BagstackStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = &ref_arg(store, "store")?.0;
        let r = evaluate_ensemble(&ref_arg(ensemble, "ensemble")?.0, s, s.truth())?;
        *out = BagstackMetrics::from(&r);
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle; the out pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn bagstack_matrix_shape(
    m: *const BagstackMatrix,
    n_docs: *mut usize,
    n_labels: *mut usize,
) -> BagstackStatus {
    guard(|| {
        let m = &ref_arg(m, "matrix")?.0;
        if !n_docs.is_null() {
            *n_docs = m.n_docs();
        }
        if !n_labels.is_null() {
            *n_labels = m.n_labels();
        }
        Ok(())
    })
}

/// Row-major values, valid until the matrix is freed. Null if `m` is null.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bagstack_matrix_data(m: *const BagstackMatrix) -> *const f64 {
    m.as_ref().map_or(ptr::null(), |m| m.0.values().as_ptr())
}

/// # Safety
/// `m` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn bagstack_matrix_free(m: *mut BagstackMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Scores a row-major probability matrix against 0/1 truth at `threshold`.
/// Probabilities must lie in (0, 1).
///
/// # Safety
/// `probs` and `truth` must each hold `n_docs * n_labels` values; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn bagstack_metrics_compute(
    probs: *const f64,
    truth: *const u8,
    n_docs: usize,
    n_labels: usize,
    threshold: f64,
    out: *mut BagstackMetrics,
) -> BagstackStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if probs.is_null() {
            return Err(Failure::Null("probs"));
        }
        if truth.is_null() {
            return Err(Failure::Null("truth"));
        }
        let cells = n_docs
            .checked_mul(n_labels)
            .ok_or_else(|| Error::Invalid("matrix size overflows".into()))?;
        let ids: Vec<String> = (0..n_docs).map(|i| i.to_string()).collect();
        let p = ProbMatrix::new(ids.clone(), n_labels, std::slice::from_raw_parts(probs, cells).to_vec())?;
        let t = BinaryMatrix::new(ids, n_labels, std::slice::from_raw_parts(truth, cells).to_vec())?;
        let labels: Vec<String> = (0..n_labels).map(|i| format!("label{i}")).collect();
        let r = full_report(&p, &t, &labels, &Conventions::with_threshold(threshold))?;
        *out = BagstackMetrics::from(&r);
        Ok(())
    })
}
