mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{dft_sweep, direct_dft, sample_config};

use eegsiam::spectral::{dstft, fft_features, normalize_magnitudes, StftConfig, WindowFn};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn frames_match_direct_dft_and_parseval() {
    let start = Instant::now();
    let sweep = dft_sweep(7, 100);
    assert!(sweep.worst_bin <= 1e-9, "bin error {:e}", sweep.worst_bin);
    assert!(sweep.worst_parseval <= 1e-9, "parseval error {:e}", sweep.worst_parseval);
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn integer_tone_concentrates_in_one_bin() {
    // 8 Hz cosine of amplitude 3 over a 2 s rectangular window at 128 Hz:
    // all energy lands in bin 16 with magnitude N * A / 2.
    let rate = 128.0;
    let signal: Vec<f64> = (0..1280).map(|t| 3.0 * (2.0 * PI * 8.0 * t as f64 / rate).cos()).collect();
    let image = dstft(&signal, rate, &StftConfig::default()).unwrap();
    assert_eq!(image.magnitudes.dim(), (129, 9));
    assert!((image.freq_resolution_hz - 0.5).abs() < 1e-15);
    for w in 0..9 {
        for f in 0..129 {
            let expected = if f == 16 { 256.0 * 3.0 / 2.0 } else { 0.0 };
            assert!((image.magnitudes[[f, w]] - expected).abs() < 1e-9, "bin {f} frame {w}");
        }
    }
    let centres: Vec<f64> = (0..9).map(|w| w as f64 + 1.0).collect();
    assert_eq!(image.frame_times_s, centres);
}

#[test]
fn paper_image_shape_for_a_minute_at_128_hz() {
    let cfg = StftConfig::default();
    assert_eq!(cfg.image_shape(60 * 128, 128.0).unwrap(), (129, 59));
}

#[test]
fn frequency_crop_keeps_bins_up_to_limit() {
    let cfg = StftConfig { max_freq_hz: Some(30.0), ..StftConfig::default() };
    let signal: Vec<f64> = (0..640).map(|t| (t as f64 * 0.37).sin()).collect();
    let cropped = dstft(&signal, 128.0, &cfg).unwrap();
    let full = dstft(&signal, 128.0, &StftConfig::default()).unwrap();
    assert_eq!(cropped.n_bins(), 61);
    for f in 0..61 {
        for w in 0..cropped.n_frames() {
            assert_eq!(cropped.magnitudes[[f, w]], full.magnitudes[[f, w]]);
        }
    }
}

#[test]
fn hann_window_matches_tapered_direct_dft() {
    let win = 64;
    let signal: Vec<f64> = (0..200).map(|t| ((t * 7919) % 97) as f64 / 97.0 - 0.5).collect();
    let cfg = StftConfig { window_s: 1.0, hop_s: 0.5, window_fn: WindowFn::Hann, ..StftConfig::default() };
    let image = dstft(&signal, win as f64, &cfg).unwrap();
    for w in 0..image.n_frames() {
        let tapered: Vec<f64> = (0..win)
            .map(|n| signal[w * 32 + n] * (0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos()))
            .collect();
        let oracle = direct_dft(&tapered);
        for f in 0..image.n_bins() {
            assert!((image.magnitudes[[f, w]] - oracle[f]).abs() < 1e-10);
        }
    }
}

#[test]
fn rejects_invalid_geometry() {
    let signal = vec![0.0; 100];
    let bad_hop = StftConfig { hop_s: 3.0, ..StftConfig::default() };
    assert!(dstft(&signal, 10.0, &bad_hop).is_err());
    let fractional = StftConfig { window_s: 0.333, ..StftConfig::default() };
    assert!(dstft(&signal, 10.0, &fractional).is_err());
    assert!(dstft(&signal[..10], 10.0, &StftConfig::default()).is_err());
}

#[test]
fn fft_features_match_direct_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.gen_range(2..=300);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let rate = 50.0;
        let feats = fft_features(&x, rate, 10.0).unwrap();
        let oracle = direct_dft(&x);
        let expected_bins = ((10.0 * n as f64 / rate + 1e-9).floor() as usize + 1).min(n / 2 + 1);
        assert_eq!(feats.len(), expected_bins);
        let scale = oracle.iter().cloned().fold(0.0, f64::max);
        for (a, b) in feats.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }
}

proptest! {
    #[test]
    fn normalized_entries_lie_in_unit_interval(
        signal in prop::collection::vec(-1e4f64..1e4, 64..256),
        upper in 1.0f64..1000.0,
    ) {
        let cfg = StftConfig { window_s: 1.0, hop_s: 0.5, ..StftConfig::default() };
        let raw = dstft(&signal, 32.0, &cfg).unwrap();
        let norm = normalize_magnitudes(&raw, upper).unwrap();
        prop_assert!(norm.is_normalized());
        for (r, n) in raw.magnitudes.iter().zip(norm.magnitudes.iter()) {
            prop_assert!((n - r.min(upper) / upper).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_follows_window_and_hop(len in 32usize..512, win in 2usize..32, hop_frac in 0.01f64..1.0) {
        let hop = ((win as f64 * hop_frac).ceil() as usize).clamp(1, win);
        let (cfg, rate) = sample_config(win, hop);
        let image = dstft(&vec![1.0; len], rate, &cfg).unwrap();
        prop_assert_eq!(image.magnitudes.dim(), (win / 2 + 1, 1 + (len - win) / hop));
        prop_assert_eq!(image.magnitudes.dim(), cfg.image_shape(len, rate).unwrap());
        prop_assert!(image.magnitudes.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn magnitudes_scale_linearly(signal in prop::collection::vec(-10f64..10.0, 64..128), c in -50f64..50.0) {
        let cfg = StftConfig { window_s: 1.0, hop_s: 1.0, ..StftConfig::default() };
        let base = dstft(&signal, 32.0, &cfg).unwrap();
        let scaled: Vec<f64> = signal.iter().map(|v| c * v).collect();
        let image = dstft(&scaled, 32.0, &cfg).unwrap();
        let top = base.magnitudes.iter().cloned().fold(0.0, f64::max);
        for (a, b) in base.magnitudes.iter().zip(image.magnitudes.iter()) {
            prop_assert!((c.abs() * a - b).abs() <= 1e-9 * (1.0 + c.abs() * top));
        }
    }
}
