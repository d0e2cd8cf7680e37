use std::ffi::{CStr, CString};
use std::ptr;

use eegsiam::siamese::{save_checkpoint, NetConfig, SiameseModel};
use eegsiam::spectral::{dstft, normalize_magnitudes, SpectralImage, StftConfig};
use eegsiam_ffi::*;

fn last_error() -> String {
    let p = eegsiam_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synthetic(n_case: u32, n_control: u32, channels: u32, duration_s: f64) -> *mut EegsiamDataset {
    let mut d = ptr::null_mut();
    let status = unsafe { eegsiam_dataset_synthetic(n_case, n_control, channels, duration_s, 3, &mut d) };
    assert_eq!(status, EegsiamStatus::Ok);
    assert!(!d.is_null());
    d
}

#[test]
fn synthetic_dataset_handle_reports_its_size() {
    let d = synthetic(3, 2, 4, 4.0);
    unsafe {
        assert_eq!(eegsiam_dataset_len(d), 5);
        assert_eq!(eegsiam_dataset_channels(d), 4);
        eegsiam_dataset_free(d);
        assert_eq!(eegsiam_dataset_len(ptr::null()), 0);
        eegsiam_dataset_free(ptr::null_mut());
    }
}

#[test]
fn dataset_load_round_trips_a_saved_cohort() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = eegsiam::signal::SynthConfig { n_case: 2, n_control: 2, m_channels: 2, duration_s: 3.0, ..Default::default() };
    let data = eegsiam::signal::generate_synthetic_cohort(&cfg).unwrap();
    let manifest = eegsiam::signal::save_dataset(&data, tmp.path()).unwrap();
    let path = CString::new(manifest.to_str().unwrap()).unwrap();
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(eegsiam_dataset_load(path.as_ptr(), &mut d), EegsiamStatus::Ok);
        assert_eq!(eegsiam_dataset_len(d), 4);
        eegsiam_dataset_free(d);
    }
    let missing = CString::new(tmp.path().join("nope.json").to_str().unwrap()).unwrap();
    let status = unsafe { eegsiam_dataset_load(missing.as_ptr(), &mut d) };
    assert_eq!(status, EegsiamStatus::Io);
    assert!(last_error().contains("nope.json"));
}

#[test]
fn dstft_matches_the_library() {
    let rate = 32.0;
    let signal: Vec<f64> = (0..320).map(|t| (t as f64 * 0.9).sin() * 4.0 + (t % 7) as f64).collect();
    let (mut bins, mut frames) = (0usize, 0usize);
    let status = unsafe { eegsiam_dstft_shape(signal.len(), rate, 2.0, 1.0, &mut bins, &mut frames) };
    assert_eq!(status, EegsiamStatus::Ok);
    assert_eq!((bins, frames), (33, 9));

    let mut out = vec![f64::NAN; bins * frames];
    let status =
        unsafe { eegsiam_dstft(signal.as_ptr(), signal.len(), rate, 2.0, 1.0, 50.0, out.as_mut_ptr(), out.len()) };
    assert_eq!(status, EegsiamStatus::Ok);
    let cfg = StftConfig { window_s: 2.0, hop_s: 1.0, upper_value: 50.0, ..StftConfig::default() };
    let expected = normalize_magnitudes(&dstft(&signal, rate, &cfg).unwrap(), 50.0).unwrap();
    assert_eq!(out, expected.magnitudes.iter().copied().collect::<Vec<_>>());

    let mut small = vec![0.0; 10];
    let status =
        unsafe { eegsiam_dstft(signal.as_ptr(), signal.len(), rate, 2.0, 1.0, 50.0, small.as_mut_ptr(), small.len()) };
    assert_eq!(status, EegsiamStatus::BufferTooSmall);
    assert!(last_error().contains("297"));

    let status = unsafe { eegsiam_dstft_shape(signal.len(), rate, 2.0, 3.0, &mut bins, &mut frames) };
    assert_eq!(status, EegsiamStatus::InvalidParameter);
}

#[test]
fn distance_and_loss() {
    let a = [1.0, 0.0];
    let b = [0.0, 1.0];
    let mut d = -1.0;
    assert_eq!(unsafe { eegsiam_cosine_distance(a.as_ptr(), b.as_ptr(), 2, &mut d) }, EegsiamStatus::Ok);
    assert!((d - 1.0).abs() < 1e-15);
    let zero = [0.0, 0.0];
    assert_ne!(unsafe { eegsiam_cosine_distance(a.as_ptr(), zero.as_ptr(), 2, &mut d) }, EegsiamStatus::Ok);
    assert!((eegsiam_contrastive_loss(1, 0.5, 1.0) - 0.25).abs() < 1e-15);
    assert!((eegsiam_contrastive_loss(0, 0.5, 2.0) - 2.25).abs() < 1e-15);
    assert_eq!(eegsiam_contrastive_loss(0, 1.5, 1.0), 0.0);
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    unsafe {
        assert_eq!(eegsiam_dataset_synthetic(1, 1, 1, 4.0, 0, ptr::null_mut()), EegsiamStatus::NullPointer);
        assert!(last_error().contains("out"));
        let mut d = ptr::null_mut();
        assert_eq!(eegsiam_dataset_load(ptr::null(), &mut d), EegsiamStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(eegsiam_cosine_distance(ptr::null(), [1.0].as_ptr(), 1, &mut v), EegsiamStatus::NullPointer);
        let mut s = ptr::null_mut();
        let id = CString::new("FFT-kNN").unwrap();
        assert_eq!(eegsiam_run_pipeline(ptr::null(), id.as_ptr(), ptr::null(), &mut s), EegsiamStatus::NullPointer);
        assert!(last_error().contains("dataset"));
        let mut n = 0usize;
        assert_eq!(eegsiam_dstft_shape(128, 32.0, 2.0, 1.0, ptr::null_mut(), &mut n), EegsiamStatus::NullPointer);
        assert_eq!(eegsiam_model_output_dim(ptr::null()), 0);
        eegsiam_model_free(ptr::null_mut());
        eegsiam_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_is_rejected() {
    let bad = [0xffu8, 0xfe, 0];
    let mut d = ptr::null_mut();
    let status = unsafe { eegsiam_dataset_load(bad.as_ptr() as *const libc::c_char, &mut d) };
    assert_eq!(status, EegsiamStatus::InvalidUtf8);
}

#[test]
fn run_pipeline_returns_report_json() {
    let d = synthetic(3, 3, 2, 8.0);
    let id = CString::new("FFT-kNN").unwrap();
    let cfg = CString::new(r#"{"classifier":{"kind":"knn","k":3},"seed":2}"#).unwrap();
    let mut report = ptr::null_mut();
    unsafe {
        assert_eq!(eegsiam_run_pipeline(d, id.as_ptr(), cfg.as_ptr(), &mut report), EegsiamStatus::Ok);
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        eegsiam_string_free(report);
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["folds"].as_array().unwrap().len(), 6);
        assert!(json["channel"]["accuracy"]["mean"].is_number());

        let bad_id = CString::new("FFT-NOPE").unwrap();
        assert_ne!(eegsiam_run_pipeline(d, bad_id.as_ptr(), ptr::null(), &mut report), EegsiamStatus::Ok);
        let bad_cfg = CString::new("{not json").unwrap();
        assert_eq!(eegsiam_run_pipeline(d, id.as_ptr(), bad_cfg.as_ptr(), &mut report), EegsiamStatus::InvalidParameter);
        assert!(last_error().starts_with("bad config json"));
        eegsiam_dataset_free(d);
    }
}

#[test]
fn model_checkpoint_embeds_like_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = NetConfig { kernel_size: 3, conv1_filters: 2, conv2_filters: 3, output_dim: 4, ..NetConfig::default() };
    let model = SiameseModel::new(cfg, (20, 12)).unwrap();
    let path = tmp.path().join("net.json");
    save_checkpoint(&model, &path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(eegsiam_model_load(cpath.as_ptr(), &mut m), EegsiamStatus::Ok);
        let (mut bins, mut frames) = (0, 0);
        assert_eq!(eegsiam_model_input_shape(m, &mut bins, &mut frames), EegsiamStatus::Ok);
        assert_eq!((bins, frames), (20, 12));
        assert_eq!(eegsiam_model_output_dim(m), 4);

        let image: Vec<f64> = (0..20 * 12).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        let mut out = vec![0.0; 4];
        assert_eq!(eegsiam_model_embed(m, image.as_ptr(), 20, 12, out.as_mut_ptr(), 4), EegsiamStatus::Ok);
        let expected = model
            .embed(&SpectralImage {
                subject_id: String::new(),
                channel_index: 0,
                magnitudes: eegsiam::ndarray::Array2::from_shape_vec((20, 12), image.clone()).unwrap(),
                freq_resolution_hz: 0.0,
                frame_times_s: Vec::new(),
            })
            .unwrap();
        assert_eq!(out.as_slice(), expected.values());
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        assert_eq!(eegsiam_model_embed(m, image.as_ptr(), 20, 12, out.as_mut_ptr(), 3), EegsiamStatus::BufferTooSmall);
        assert_ne!(eegsiam_model_embed(m, image.as_ptr(), 12, 20, out.as_mut_ptr(), 4), EegsiamStatus::Ok);
        eegsiam_model_free(m);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/eegsiam.h")).unwrap();
    for sym in [
        "eegsiam_last_error",
        "eegsiam_dataset_load",
        "eegsiam_dataset_synthetic",
        "eegsiam_dataset_len",
        "eegsiam_dataset_channels",
        "eegsiam_dataset_free",
        "eegsiam_dstft_shape",
        "eegsiam_dstft",
        "eegsiam_model_load",
        "eegsiam_model_input_shape",
        "eegsiam_model_output_dim",
        "eegsiam_model_embed",
        "eegsiam_model_free",
        "eegsiam_cosine_distance",
        "eegsiam_contrastive_loss",
        "eegsiam_run_pipeline",
        "eegsiam_string_free",
        "EEGSIAM_STATUS_OK",
        "EEGSIAM_STATUS_NULL_POINTER",
        "typedef struct EegsiamDataset EegsiamDataset",
        "typedef struct EegsiamModel EegsiamModel",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
    assert!(header.contains("size_t"));
    assert!(!header.contains("uintptr_t"));
}
