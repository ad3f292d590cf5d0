//! C interface to the emonet classifiers and alert monitor.
//!
//! Every fallible function returns an [`EmonetStatus`]; on failure a
//! description is available from [`emonet_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use emonet::alert::{AlertMonitor, AlertPolicy, SystemClock};
use emonet::classify::{EmotionClassifier, EmotionLabel, EmotionScores};
use emonet::pipeline::{load_model, Model};
use emonet::preprocess::Roi;

/// Number of emotion labels, and the length of every score array.
pub const EMONET_LABEL_COUNT: usize = 7;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmonetStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    BadModel = 4,
    ShapeMismatch = 5,
    NonMonotonicFrame = 6,
    Panic = 7,
}

/// A loaded classifier.
pub struct EmonetModel {
    inner: Model,
}

/// Alert counters for one stream.
pub struct EmonetMonitor {
    inner: AlertMonitor<SystemClock>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: EmonetStatus, message: impl Into<String>) -> EmonetStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> EmonetStatus) -> EmonetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(EmonetStatus::Panic, "internal panic"),
    }
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn emonet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static NUL-terminated label name for `index` in 0..7, or NULL.
#[no_mangle]
pub extern "C" fn emonet_label_name(index: u32) -> *const c_char {
    const NAMES: [&CStr; EMONET_LABEL_COUNT] = [
        c"angry",
        c"disgust",
        c"scared",
        c"happy",
        c"sad",
        c"surprised",
        c"neutral",
    ];
    NAMES.get(index as usize).map_or(ptr::null(), |s| s.as_ptr())
}

fn finish_load(bytes: &[u8], out: *mut *mut EmonetModel) -> EmonetStatus {
    match load_model(bytes) {
        Ok(inner) => {
            // SAFETY: caller guarantees `out` is valid for writes; checked non-null.
            unsafe { *out = Box::into_raw(Box::new(EmonetModel { inner })) };
            EmonetStatus::Ok
        }
        Err(e) => fail(EmonetStatus::BadModel, e.to_string()),
    }
}

/// Loads a model file. On success `*out` receives a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emonet_model_load(path: *const c_char, out: *mut *mut EmonetModel) -> EmonetStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(EmonetStatus::NullArgument, "path and out must not be NULL");
        }
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return fail(EmonetStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match std::fs::read(Path::new(path)) {
            Ok(bytes) => finish_load(&bytes, out),
            Err(e) => fail(EmonetStatus::Io, format!("{path}: {e}")),
        }
    })
}

/// Loads a model from an in-memory model file image.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emonet_model_load_bytes(
    data: *const u8,
    len: usize,
    out: *mut *mut EmonetModel,
) -> EmonetStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return fail(EmonetStatus::NullArgument, "data and out must not be NULL");
        }
        let bytes = unsafe { std::slice::from_raw_parts(data, len) };
        finish_load(bytes, out)
    })
}

/// Releases a model handle. NULL is ignored.
///
/// # Safety
/// `model` must come from a load function and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emonet_model_free(model: *mut EmonetModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Side length of the square input the model expects; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emonet_model_roi_size(model: *const EmonetModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.roi_size())
}

/// Scores one region of `len = side²` pixels in `[0, 1]`, row-major, and
/// writes seven probabilities in label order to `probs_out`.
///
/// # Safety
/// `pixels` must point to `len` floats and `probs_out` to room for 7 doubles.
#[no_mangle]
pub unsafe extern "C" fn emonet_model_predict(
    model: *const EmonetModel,
    pixels: *const f32,
    len: usize,
    probs_out: *mut f64,
) -> EmonetStatus {
    guard(|| {
        let Some(model) = (unsafe { model.as_ref() }) else {
            return fail(EmonetStatus::NullArgument, "model must not be NULL");
        };
        if pixels.is_null() || probs_out.is_null() {
            return fail(EmonetStatus::NullArgument, "pixels and probs_out must not be NULL");
        }
        let side = model.inner.roi_size();
        if len != side * side {
            return fail(
                EmonetStatus::ShapeMismatch,
                format!("expected {} pixels ({side}x{side}), got {len}", side * side),
            );
        }
        let data = unsafe { std::slice::from_raw_parts(pixels, len) }.to_vec();
        if data.iter().any(|v| !v.is_finite()) {
            return fail(EmonetStatus::InvalidArgument, "pixels must be finite");
        }
        let roi = match Roi::new(side, data) {
            Ok(r) => r,
            Err(e) => return fail(EmonetStatus::ShapeMismatch, e.to_string()),
        };
        match model.inner.classify(&roi) {
            Ok(scores) => {
                let out = unsafe { std::slice::from_raw_parts_mut(probs_out, EMONET_LABEL_COUNT) };
                out.copy_from_slice(scores.probs());
                EmonetStatus::Ok
            }
            Err(e) => fail(EmonetStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Creates a monitor. `monitored` lists label indices; with `count == 0`
/// the default set (sad, angry, surprised, disgust) is used.
///
/// # Safety
/// `monitored` must point to `count` bytes (may be NULL when `count` is 0)
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emonet_monitor_new(
    thresh: u64,
    cooldown_frames: u64,
    monitored: *const u8,
    count: usize,
    out: *mut *mut EmonetMonitor,
) -> EmonetStatus {
    guard(|| {
        if out.is_null() || (count > 0 && monitored.is_null()) {
            return fail(EmonetStatus::NullArgument, "out and monitored must not be NULL");
        }
        let labels: Vec<EmotionLabel> = if count == 0 {
            AlertPolicy::DEFAULT_MONITORED.to_vec()
        } else {
            let raw = unsafe { std::slice::from_raw_parts(monitored, count) };
            match raw.iter().map(|&i| EmotionLabel::from_index(i as usize)).collect::<Option<Vec<_>>>() {
                Some(l) => l,
                None => return fail(EmonetStatus::InvalidArgument, "label index out of range"),
            }
        };
        match AlertPolicy::new(thresh, &labels, cooldown_frames) {
            Ok(policy) => {
                let m = EmonetMonitor { inner: AlertMonitor::new(policy) };
                unsafe { *out = Box::into_raw(Box::new(m)) };
                EmonetStatus::Ok
            }
            Err(e) => fail(EmonetStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Counts one classified frame. `probs` holds seven scores summing to 1.
/// If an alert fires, `*alert_label` receives its label index and
/// `*alert_count` the counter value; otherwise `*alert_label` is -1.
///
/// # Safety
/// `monitor` must be a live handle, `probs` point to 7 doubles, and the
/// output pointers be valid.
#[no_mangle]
pub unsafe extern "C" fn emonet_monitor_ingest(
    monitor: *mut EmonetMonitor,
    frame_index: u64,
    probs: *const f64,
    alert_label: *mut i32,
    alert_count: *mut u64,
) -> EmonetStatus {
    guard(|| {
        let Some(monitor) = (unsafe { monitor.as_mut() }) else {
            return fail(EmonetStatus::NullArgument, "monitor must not be NULL");
        };
        if probs.is_null() || alert_label.is_null() || alert_count.is_null() {
            return fail(EmonetStatus::NullArgument, "probs and outputs must not be NULL");
        }
        let raw = unsafe { std::slice::from_raw_parts(probs, EMONET_LABEL_COUNT) };
        let scores = match EmotionScores::new(raw) {
            Ok(s) => s,
            Err(e) => return fail(EmonetStatus::InvalidArgument, e.to_string()),
        };
        match monitor.inner.ingest(frame_index, &scores) {
            Ok(event) => {
                unsafe {
                    *alert_label = event.as_ref().map_or(-1, |e| e.label.index() as i32);
                    *alert_count = event.as_ref().map_or(0, |e| e.counter_value);
                }
                EmonetStatus::Ok
            }
            Err(e) => fail(EmonetStatus::NonMonotonicFrame, e.to_string()),
        }
    })
}

/// Counts a frame with no face; only the cooldown advances.
///
/// # Safety
/// `monitor` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn emonet_monitor_skip(monitor: *mut EmonetMonitor, frame_index: u64) -> EmonetStatus {
    guard(|| {
        let Some(monitor) = (unsafe { monitor.as_mut() }) else {
            return fail(EmonetStatus::NullArgument, "monitor must not be NULL");
        };
        match monitor.inner.ingest_skipped(frame_index) {
            Ok(()) => EmonetStatus::Ok,
            Err(e) => fail(EmonetStatus::NonMonotonicFrame, e.to_string()),
        }
    })
}

/// Current counter of label `index`; 0 for NULL or an invalid index.
///
/// # Safety
/// `monitor` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emonet_monitor_counter(monitor: *const EmonetMonitor, index: u32) -> u64 {
    match (unsafe { monitor.as_ref() }, EmotionLabel::from_index(index as usize)) {
        (Some(m), Some(l)) => m.inner.state().counters[l.index()],
        _ => 0,
    }
}

/// Releases a monitor handle. NULL is ignored.
///
/// # Safety
/// `monitor` must come from [`emonet_monitor_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emonet_monitor_free(monitor: *mut EmonetMonitor) {
    if !monitor.is_null() {
        drop(unsafe { Box::from_raw(monitor) });
    }
}
