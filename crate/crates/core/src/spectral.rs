//! Short-time spectral images and full-length FFT baseline features.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Dataset, SubjectInfo};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    #[default]
    Rectangular,
    Hann,
}

impl std::str::FromStr for WindowFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "rect" | "boxcar" => Ok(WindowFn::Rectangular),
            "hann" => Ok(WindowFn::Hann),
            other => Err(Error::param(format!("unknown window function `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub window_fn: WindowFn,
    /// Magnitude normaliser: entries are clamped at this value and divided by it.
    pub upper_value: f64,
    /// Optional crop of the frequency axis to bins at or below this frequency.
    pub max_freq_hz: Option<f64>,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_s: 2.0,
            hop_s: 1.0,
            window_fn: WindowFn::Rectangular,
            upper_value: 300.0,
            max_freq_hz: None,
        }
    }
}

fn whole_samples(seconds: f64, rate: f64, what: &str) -> Result<usize> {
    let exact = seconds * rate;
    let n = exact.round();
    if !exact.is_finite() || (exact - n).abs() > 1e-6 {
        return Err(Error::param(format!("{what} of {seconds} s is not a whole number of samples at {rate} Hz")));
    }
    Ok(n as usize)
}

impl StftConfig {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        self.window_samples(sample_rate_hz)?;
        self.hop_samples(sample_rate_hz)?;
        if !(self.upper_value > 0.0) {
            return Err(Error::param(format!("upper value must be positive, got {}", self.upper_value)));
        }
        if let Some(f) = self.max_freq_hz {
            if !(f >= 0.0) {
                return Err(Error::param("max_freq_hz must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate_hz: f64) -> Result<usize> {
        let n = whole_samples(self.window_s, sample_rate_hz, "window")?;
        if n < 2 {
            return Err(Error::param(format!("window must span at least 2 samples, got {n}")));
        }
        Ok(n)
    }

    pub fn hop_samples(&self, sample_rate_hz: f64) -> Result<usize> {
        if !(self.hop_s > 0.0 && self.hop_s <= self.window_s) {
            return Err(Error::param(format!(
                "hop must satisfy 0 < hop <= window, got hop {} window {}",
                self.hop_s, self.window_s
            )));
        }
        let n = whole_samples(self.hop_s, sample_rate_hz, "hop")?;
        if n == 0 {
            return Err(Error::param("hop rounds to zero samples"));
        }
        Ok(n)
    }

    /// Image shape `(F, W)` for a signal of `n_samples`.
    pub fn image_shape(&self, n_samples: usize, sample_rate_hz: f64) -> Result<(usize, usize)> {
        let win = self.window_samples(sample_rate_hz)?;
        let hop = self.hop_samples(sample_rate_hz)?;
        if n_samples < win {
            return Err(Error::data(format!("signal of {n_samples} samples is shorter than one window ({win})")));
        }
        let frames = 1 + (n_samples - win) / hop;
        let full = win / 2 + 1;
        let bins = match self.max_freq_hz {
            Some(f) => cropped_bins(f, win as f64 / sample_rate_hz, full),
            None => full,
        };
        Ok((bins, frames))
    }
}

fn cropped_bins(max_freq_hz: f64, duration_s: f64, full: usize) -> usize {
    let top = (max_freq_hz * duration_s + 1e-9).floor() as usize;
    (top + 1).min(full)
}

/// Per-channel time-frequency magnitude grid: rows are frequency bins, columns are frames.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralImage {
    pub subject_id: String,
    pub channel_index: usize,
    pub magnitudes: Array2<f64>,
    pub freq_resolution_hz: f64,
    pub frame_times_s: Vec<f64>,
}

impl SpectralImage {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.magnitudes.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.magnitudes.iter().all(|&m| (0.0..=1.0).contains(&m))
    }
}

/// Reusable DSTFT plan for one window length.
pub struct StftPlan {
    fft: Arc<dyn Fft<f64>>,
    taper: Vec<f64>,
    hop: usize,
    bins: usize,
    sample_rate_hz: f64,
}

impl StftPlan {
    pub fn new(sample_rate_hz: f64, cfg: &StftConfig) -> Result<Self> {
        cfg.validate(sample_rate_hz)?;
        let win = cfg.window_samples(sample_rate_hz)?;
        let taper = match cfg.window_fn {
            WindowFn::Rectangular => vec![1.0; win],
            // periodic Hann
            WindowFn::Hann => (0..win)
                .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
                .collect(),
        };
        let full = win / 2 + 1;
        let bins = match cfg.max_freq_hz {
            Some(f) => cropped_bins(f, win as f64 / sample_rate_hz, full),
            None => full,
        };
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(win),
            taper,
            hop: cfg.hop_samples(sample_rate_hz)?,
            bins,
            sample_rate_hz,
        })
    }

    pub fn window_samples(&self) -> usize {
        self.taper.len()
    }

    /// Un-normalised magnitude image of one channel.
    pub fn transform(&self, signal: &[f64]) -> Result<SpectralImage> {
        let win = self.taper.len();
        if signal.len() < win {
            return Err(Error::data(format!(
                "signal of {} samples is shorter than one window ({win})",
                signal.len()
            )));
        }
        let frames = 1 + (signal.len() - win) / self.hop;
        let mut magnitudes = Array2::zeros((self.bins, frames));
        let mut buf = vec![Complex::new(0.0, 0.0); win];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for w in 0..frames {
            let start = w * self.hop;
            for (slot, (&x, &t)) in buf.iter_mut().zip(signal[start..start + win].iter().zip(&self.taper)) {
                *slot = Complex::new(x * t, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for f in 0..self.bins {
                magnitudes[[f, w]] = buf[f].norm();
            }
        }
        let frame_times_s = (0..frames)
            .map(|w| (w * self.hop) as f64 / self.sample_rate_hz + 0.5 * win as f64 / self.sample_rate_hz)
            .collect();
        Ok(SpectralImage {
            subject_id: String::new(),
            channel_index: 0,
            magnitudes,
            freq_resolution_hz: self.sample_rate_hz / win as f64,
            frame_times_s,
        })
    }
}

/// Short-time DFT magnitudes of a single channel (not normalised).
pub fn dstft(signal: &[f64], sample_rate_hz: f64, cfg: &StftConfig) -> Result<SpectralImage> {
    StftPlan::new(sample_rate_hz, cfg)?.transform(signal)
}

/// Clamp at `upper` and divide by it, mapping every entry into `[0, 1]`.
pub fn normalize_magnitudes(image: &SpectralImage, upper: f64) -> Result<SpectralImage> {
    if !(upper > 0.0 && upper.is_finite()) {
        return Err(Error::param(format!("upper value must be positive, got {upper}")));
    }
    let mut out = image.clone();
    out.magnitudes.mapv_inplace(|m| m.min(upper) / upper);
    Ok(out)
}

/// Full-length DFT magnitude spectrum truncated to bins at or below `max_freq_hz`.
pub fn fft_features(signal: &[f64], sample_rate_hz: f64, max_freq_hz: f64) -> Result<Vec<f64>> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::data(format!("fft features need at least 2 samples, got {n}")));
    }
    if !(sample_rate_hz > 0.0) || !(max_freq_hz >= 0.0) {
        return Err(Error::param("sample rate must be positive and max frequency non-negative"));
    }
    let bins = cropped_bins(max_freq_hz, n as f64 / sample_rate_hz, n / 2 + 1);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut buf);
    Ok(buf[..bins].iter().map(|c| c.norm()).collect())
}

/// Normalised spectral images for every `(subject, channel)` of a dataset,
/// stored subject-major so pairs can reference them by index.
#[derive(Clone, Debug)]
pub struct ImageStore {
    subjects: Vec<SubjectInfo>,
    n_channels: usize,
    images: Vec<SpectralImage>,
}

impl ImageStore {
    pub fn from_images(subjects: Vec<SubjectInfo>, n_channels: usize, images: Vec<SpectralImage>) -> Result<Self> {
        if images.len() != subjects.len() * n_channels {
            return Err(Error::data(format!(
                "image store expects {} images, got {}",
                subjects.len() * n_channels,
                images.len()
            )));
        }
        for (s, subj) in subjects.iter().enumerate() {
            for c in 0..n_channels {
                let img = &images[s * n_channels + c];
                if img.subject_id != subj.subject_id || img.channel_index != c {
                    return Err(Error::data(format!(
                        "missing image for subject {} channel {c}",
                        subj.subject_id
                    )));
                }
            }
        }
        Ok(Self { subjects, n_channels, images })
    }

    pub fn subjects(&self) -> &[SubjectInfo] {
        &self.subjects
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.images.first().map_or((0, 0), |i| i.magnitudes.dim())
    }

    pub fn subject_index(&self, subject_id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s.subject_id == subject_id)
    }

    pub fn get(&self, subject: usize, channel: usize) -> &SpectralImage {
        &self.images[subject * self.n_channels + channel]
    }

    pub fn images(&self) -> &[SpectralImage] {
        &self.images
    }

    /// Copy with every image passed through [`normalize_magnitudes`].
    pub fn normalized(&self, upper: f64) -> Result<ImageStore> {
        let images = self.images.iter().map(|img| normalize_magnitudes(img, upper)).collect::<Result<Vec<_>>>()?;
        Ok(ImageStore { subjects: self.subjects.clone(), n_channels: self.n_channels, images })
    }

    /// Store restricted to the given subject indices (in the given order).
    pub fn select(&self, subjects: &[usize]) -> ImageStore {
        let mut images = Vec::with_capacity(subjects.len() * self.n_channels);
        for &s in subjects {
            images.extend_from_slice(&self.images[s * self.n_channels..(s + 1) * self.n_channels]);
        }
        ImageStore {
            subjects: subjects.iter().map(|&s| self.subjects[s].clone()).collect(),
            n_channels: self.n_channels,
            images,
        }
    }
}

/// DSTFT followed by normalisation for every subject and channel.
/// Unnormalised magnitude images for every `(subject, channel)`, subject-major.
pub fn compute_raw_images(dataset: &Dataset, cfg: &StftConfig) -> Result<ImageStore> {
    let plan = StftPlan::new(dataset.sample_rate_hz(), cfg)?;
    let c = dataset.n_channels();
    let jobs: Vec<(usize, usize)> = (0..dataset.len()).flat_map(|s| (0..c).map(move |ch| (s, ch))).collect();
    let images = jobs
        .par_iter()
        .map(|&(s, ch)| {
            let rec = &dataset.recordings()[s];
            let signal = rec.channel(ch).to_vec();
            let mut img = plan.transform(&signal)?;
            img.subject_id = rec.subject_id.clone();
            img.channel_index = ch;
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;
    ImageStore::from_images(dataset.subjects(), c, images)
}

/// Images normalised by `cfg.upper_value`, ready for the network.
pub fn compute_images(dataset: &Dataset, cfg: &StftConfig) -> Result<ImageStore> {
    compute_raw_images(dataset, cfg)?.normalized(cfg.upper_value)
}

/// `F` rows by `W` columns, lowest frequency first.
pub fn write_image_csv(image: &SpectralImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    for row in image.magnitudes.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Binary 8-bit PGM, highest frequency on the top row. Images that are not
/// normalised are scaled by their maximum.
pub fn write_image_pgm(image: &SpectralImage, path: &Path) -> Result<()> {
    let (f, w) = image.magnitudes.dim();
    let peak = image.magnitudes.iter().cloned().fold(0.0_f64, f64::max);
    let scale = if image.is_normalized() { 1.0 } else if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let mut bytes = format!("P5\n{w} {f}\n255\n").into_bytes();
    for row in (0..f).rev() {
        for col in 0..w {
            let v = (image.magnitudes[[row, col]] * scale).clamp(0.0, 1.0);
            bytes.push((v * 255.0).round() as u8);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin()).collect()
    }

    #[test]
    fn paper_window_gives_half_hertz_bins() {
        let img = dstft(&vec![0.0; 7680], 128.0, &StftConfig::default()).unwrap();
        assert_eq!(img.n_bins(), 129);
        assert_eq!(img.n_frames(), 59);
        assert_eq!(img.freq_resolution_hz, 0.5);
        assert!(img.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn eight_hertz_tone_peaks_at_bin_sixteen() {
        let cfg = StftConfig { hop_s: 2.0, ..StftConfig::default() };
        let img = dstft(&sine(8.0, 128.0, 7680), 128.0, &cfg).unwrap();
        assert_eq!(img.n_frames(), 30);
        for col in img.magnitudes.columns() {
            let argmax = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(argmax, 16);
        }
    }

    #[test]
    fn short_signal_is_rejected() {
        assert!(dstft(&[0.0; 100], 128.0, &StftConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let bad_hop = StftConfig { hop_s: 3.0, ..StftConfig::default() };
        assert!(bad_hop.validate(128.0).is_err());
        let zero_hop = StftConfig { hop_s: 0.0, ..StftConfig::default() };
        assert!(zero_hop.validate(128.0).is_err());
        let fractional = StftConfig { window_s: 2.001, ..StftConfig::default() };
        assert!(fractional.validate(128.0).is_err());
        let tiny = StftConfig { window_s: 1.0, hop_s: 1.0, ..StftConfig::default() };
        assert!(tiny.validate(1.0).is_err());
        let bad_u = StftConfig { upper_value: 0.0, ..StftConfig::default() };
        assert!(bad_u.validate(128.0).is_err());
    }

    #[test]
    fn normalization_examples() {
        let mut img = dstft(&vec![0.0; 256], 128.0, &StftConfig::default()).unwrap();
        img.magnitudes[[0, 0]] = 100.0;
        img.magnitudes[[1, 0]] = 300.0;
        let n = normalize_magnitudes(&img, 200.0).unwrap();
        assert_eq!(n.magnitudes[[0, 0]], 0.5);
        assert_eq!(n.magnitudes[[1, 0]], 1.0);
        assert_eq!(n.magnitudes[[2, 0]], 0.0);
        assert!(normalize_magnitudes(&img, 0.0).is_err());
        assert!(normalize_magnitudes(&img, -3.0).is_err());
    }

    #[test]
    fn fft_feature_count_and_peak() {
        let feats = fft_features(&sine(8.0, 128.0, 7680), 128.0, 30.0).unwrap();
        assert_eq!(feats.len(), 1801);
        let argmax = feats.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 480);
        assert!(fft_features(&[], 128.0, 30.0).is_err());
        assert!(fft_features(&[0.0; 64], 128.0, 30.0).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn crop_limits_bins() {
        let cfg = StftConfig { max_freq_hz: Some(30.0), ..StftConfig::default() };
        assert_eq!(cfg.image_shape(7680, 128.0).unwrap(), (61, 59));
        let img = dstft(&vec![1.0; 7680], 128.0, &cfg).unwrap();
        assert_eq!(img.magnitudes.dim(), (61, 59));
    }

    #[test]
    fn hann_window_tapers() {
        let cfg = StftConfig { window_fn: WindowFn::Hann, ..StftConfig::default() };
        let img = dstft(&vec![1.0; 512], 128.0, &cfg).unwrap();
        // constant input under a periodic Hann window: DC = N/2, bin 1 = N/4
        assert!((img.magnitudes[[0, 0]] - 128.0).abs() < 1e-9);
        assert!((img.magnitudes[[1, 0]] - 64.0).abs() < 1e-9);
        assert!(img.magnitudes[[2, 0]].abs() < 1e-9);
    }
}
