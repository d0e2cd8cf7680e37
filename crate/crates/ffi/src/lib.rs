//! C ABI over the eegsiam pipeline.
//!
//! Datasets and models cross the boundary as opaque handles that must be
//! released with their `_free` function. Every fallible call returns an
//! [`EegsiamStatus`]; on failure a message is kept per thread and can be read
//! with [`eegsiam_last_error`]. Strings returned to the caller are released
//! with [`eegsiam_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use eegsiam::eval::{run_pipeline, PipelineConfig, PipelineId};
use eegsiam::signal::{generate_synthetic_cohort, load_dataset, Dataset, SynthConfig};
use eegsiam::siamese::{contrastive_loss, cosine_distance, load_checkpoint, SiameseModel};
use eegsiam::spectral::{dstft, normalize_magnitudes, SpectralImage, StftConfig};
use eegsiam::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EegsiamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameter = 3,
    Data = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Loaded or generated cohort.
pub struct EegsiamDataset {
    inner: Dataset,
}

/// Trained base network.
pub struct EegsiamModel {
    inner: SiameseModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> EegsiamStatus {
    match err {
        Error::InvalidParameter(_) => EegsiamStatus::InvalidParameter,
        Error::Numerical(_) => EegsiamStatus::Numerical,
        Error::Io { .. } => EegsiamStatus::Io,
        Error::Stage { source, .. } => status_of(source),
        _ => EegsiamStatus::Data,
    }
}

fn fail(status: EegsiamStatus, msg: impl Into<String>) -> EegsiamStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), EegsiamStatus>) -> EegsiamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EegsiamStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(EegsiamStatus::Panic, "internal panic"),
    }
}

fn lib_err(err: Error) -> EegsiamStatus {
    fail(status_of(&err), err.to_string())
}

unsafe fn str_arg<'a>(p: *const libc::c_char, name: &str) -> Result<&'a str, EegsiamStatus> {
    if p.is_null() {
        return Err(fail(EegsiamStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: caller guarantees a NUL-terminated string.
    CStr::from_ptr(p).to_str().map_err(|_| fail(EegsiamStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], EegsiamStatus> {
    if p.is_null() {
        return Err(fail(EegsiamStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: caller guarantees `len` readable doubles.
    Ok(std::slice::from_raw_parts(p, len))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), EegsiamStatus> {
    if p.is_null() {
        Err(fail(EegsiamStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eegsiam_last_error() -> *const libc::c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_dataset_load(
    manifest_path: *const libc::c_char,
    out: *mut *mut EegsiamDataset,
) -> EegsiamStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(manifest_path, "manifest_path")?;
        let inner = load_dataset(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EegsiamDataset { inner }));
        Ok(())
    })
}

/// Synthetic cohort with the default band profiles at 128 Hz.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_dataset_synthetic(
    n_case: u32,
    n_control: u32,
    n_channels: u32,
    duration_s: f64,
    seed: u64,
    out: *mut *mut EegsiamDataset,
) -> EegsiamStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = SynthConfig {
            n_case: n_case as usize,
            n_control: n_control as usize,
            m_channels: n_channels as usize,
            duration_s,
            seed,
            ..SynthConfig::default()
        };
        let inner = generate_synthetic_cohort(&cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EegsiamDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_dataset_len(dataset: *const EegsiamDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_dataset_channels(dataset: *const EegsiamDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.n_channels())
}

/// # Safety
/// `dataset` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_dataset_free(dataset: *mut EegsiamDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

fn stft_config(window_s: f64, hop_s: f64, upper_value: f64) -> StftConfig {
    StftConfig { window_s, hop_s, upper_value, ..StftConfig::default() }
}

/// Image size `bins x frames` that [`eegsiam_dstft`] produces.
///
/// # Safety
/// `bins` and `frames` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_dstft_shape(
    n_samples: usize,
    sample_rate_hz: f64,
    window_s: f64,
    hop_s: f64,
    bins: *mut usize,
    frames: *mut usize,
) -> EegsiamStatus {
    guard(|| {
        non_null(bins, "bins")?;
        non_null(frames, "frames")?;
        let (f, w) = stft_config(window_s, hop_s, 1.0).image_shape(n_samples, sample_rate_hz).map_err(lib_err)?;
        *bins = f;
        *frames = w;
        Ok(())
    })
}

/// Normalised magnitude image of one channel, written row-major
/// (frequency-major) into `out`, which must hold `bins * frames` doubles.
///
/// # Safety
/// `signal` must point to `n_samples` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_dstft(
    signal: *const f64,
    n_samples: usize,
    sample_rate_hz: f64,
    window_s: f64,
    hop_s: f64,
    upper_value: f64,
    out: *mut f64,
    out_len: usize,
) -> EegsiamStatus {
    guard(|| {
        let signal = slice_arg(signal, n_samples, "signal")?;
        non_null(out, "out")?;
        let cfg = stft_config(window_s, hop_s, upper_value);
        let img = dstft(signal, sample_rate_hz, &cfg).and_then(|i| normalize_magnitudes(&i, upper_value)).map_err(lib_err)?;
        let n = img.magnitudes.len();
        if out_len < n {
            return Err(fail(EegsiamStatus::BufferTooSmall, format!("output holds {out_len} values, image needs {n}")));
        }
        // SAFETY: caller guarantees `out_len` writable doubles.
        let dst = std::slice::from_raw_parts_mut(out, n);
        for (d, s) in dst.iter_mut().zip(img.magnitudes.iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_model_load(path: *const libc::c_char, out: *mut *mut EegsiamModel) -> EegsiamStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(path, "path")?;
        let inner = load_checkpoint(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EegsiamModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `bins` and `frames` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_model_input_shape(
    model: *const EegsiamModel,
    bins: *mut usize,
    frames: *mut usize,
) -> EegsiamStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(EegsiamStatus::NullPointer, "model is null"))?;
        non_null(bins, "bins")?;
        non_null(frames, "frames")?;
        let (f, w) = m.inner.input_shape();
        *bins = f;
        *frames = w;
        Ok(())
    })
}

/// Feature dimension, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_model_output_dim(model: *const EegsiamModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().output_dim)
}

/// Eval-mode embedding of a row-major `bins x frames` image.
///
/// # Safety
/// `image` must point to `bins * frames` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_model_embed(
    model: *const EegsiamModel,
    image: *const f64,
    bins: usize,
    frames: usize,
    out: *mut f64,
    out_len: usize,
) -> EegsiamStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(EegsiamStatus::NullPointer, "model is null"))?;
        let values = slice_arg(image, bins * frames, "image")?;
        non_null(out, "out")?;
        let q = m.inner.config().output_dim;
        if out_len < q {
            return Err(fail(EegsiamStatus::BufferTooSmall, format!("output holds {out_len} values, embedding has {q}")));
        }
        let magnitudes = eegsiam::ndarray::Array2::from_shape_vec((bins, frames), values.to_vec())
            .map_err(|e| fail(EegsiamStatus::InvalidParameter, e.to_string()))?;
        let img = SpectralImage {
            subject_id: String::new(),
            channel_index: 0,
            magnitudes,
            freq_resolution_hz: 0.0,
            frame_times_s: Vec::new(),
        };
        let f = m.inner.embed(&img).map_err(lib_err)?;
        // SAFETY: caller guarantees `out_len >= q` writable doubles.
        std::slice::from_raw_parts_mut(out, q).copy_from_slice(f.values());
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_model_free(model: *mut EegsiamModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Cosine distance `1 - cos(a, b)` clamped to `[0, 2]`.
///
/// # Safety
/// `a` and `b` must each point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_cosine_distance(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> EegsiamStatus {
    guard(|| {
        let a = slice_arg(a, len, "a")?;
        let b = slice_arg(b, len, "b")?;
        non_null(out, "out")?;
        *out = cosine_distance(a, b).map_err(lib_err)?;
        Ok(())
    })
}

/// `y d^2 + (1 - y) max(0, m - d)^2`; `y` is 1 for same-label pairs.
#[no_mangle]
pub extern "C" fn eegsiam_contrastive_loss(y: u8, distance: f64, margin: f64) -> f64 {
    contrastive_loss(y, distance, margin)
}

/// Runs a pipeline such as `"FFT-kNN"` or `"DSTFT-SNN-XGB"` and returns its
/// report as JSON in `*report_json`. `config_json` may be NULL for defaults.
///
/// # Safety
/// `dataset` must be a live handle, strings NUL-terminated, `report_json` valid.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_run_pipeline(
    dataset: *const EegsiamDataset,
    pipeline_id: *const libc::c_char,
    config_json: *const libc::c_char,
    report_json: *mut *mut libc::c_char,
) -> EegsiamStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| fail(EegsiamStatus::NullPointer, "dataset is null"))?;
        non_null(report_json, "report_json")?;
        let id: PipelineId = str_arg(pipeline_id, "pipeline_id")?.parse().map_err(lib_err)?;
        let cfg: PipelineConfig = if config_json.is_null() {
            PipelineConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| fail(EegsiamStatus::InvalidParameter, format!("bad config json: {e}")))?
        };
        let run = run_pipeline(id, &d.inner, &cfg, None).map_err(lib_err)?;
        let text = serde_json::to_string(&run.report).map_err(|e| fail(EegsiamStatus::Data, e.to_string()))?;
        let c = CString::new(text).map_err(|_| fail(EegsiamStatus::Data, "report contains NUL"))?;
        *report_json = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eegsiam_string_free(s: *mut libc::c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
