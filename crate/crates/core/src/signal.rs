//! Recording data model, on-disk ingestion and a synthetic cohort generator.
//!
//! On disk a dataset is a JSON manifest (an array of
//! `{subject_id, label, path, sample_rate_hz}`) plus one CSV per subject whose
//! header row holds the channel names and whose rows are time samples.
//! Relative paths in the manifest resolve against the manifest's directory.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Electrode names of the 16-channel 10-20 montage used by the reference cohort.
pub const MONTAGE_10_20: [&str; 16] = [
    "F7", "F3", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1", "O2",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Case,
    Control,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Case => "case",
            Label::Control => "control",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "case" => Ok(Label::Case),
            "control" => Ok(Label::Control),
            other => Err(Error::data(format!("unknown label `{other}` (expected case|control)"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One subject's labelled multichannel signal, `M x T` samples in microvolts.
#[derive(Clone, Debug, PartialEq)]
pub struct EegRecording {
    pub subject_id: String,
    pub label: Label,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub samples: Array2<f64>,
}

impl EegRecording {
    pub fn new(
        subject_id: impl Into<String>,
        label: Label,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
        samples: Array2<f64>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::data(format!(
                "subject {subject_id}: sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        let (m, t) = samples.dim();
        if m == 0 || t == 0 {
            return Err(Error::data(format!("subject {subject_id}: empty recording ({m}x{t})")));
        }
        if channel_names.len() != m {
            return Err(Error::data(format!(
                "subject {subject_id}: {} channel names for {m} channel rows",
                channel_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &channel_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::data(format!("subject {subject_id}: duplicated channel `{name}`")));
            }
        }
        Ok(Self { subject_id, label, sample_rate_hz, channel_names, samples })
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn channel(&self, index: usize) -> ArrayView1<'_, f64> {
        self.samples.row(index)
    }
}

/// A cohort of recordings sharing one channel layout, sample rate and length.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    recordings: Vec<EegRecording>,
    channel_names: Vec<String>,
}

impl Dataset {
    pub fn new(recordings: Vec<EegRecording>) -> Result<Self> {
        let first = recordings.first().ok_or_else(|| Error::data("dataset has no recordings"))?;
        let channel_names = first.channel_names.clone();
        let (rate, t) = (first.sample_rate_hz, first.n_samples());
        let mut ids = HashSet::new();
        for rec in &recordings {
            if !ids.insert(rec.subject_id.as_str()) {
                return Err(Error::data(format!("duplicated subject_id `{}`", rec.subject_id)));
            }
            if rec.channel_names != channel_names {
                return Err(Error::data(format!(
                    "subject {}: channel layout {:?} differs from canonical {:?}",
                    rec.subject_id, rec.channel_names, channel_names
                )));
            }
            if rec.sample_rate_hz != rate {
                return Err(Error::data(format!(
                    "subject {}: sample rate {} differs from {rate}",
                    rec.subject_id, rec.sample_rate_hz
                )));
            }
            if rec.n_samples() != t {
                return Err(Error::data(format!(
                    "subject {}: {} samples per channel, expected {t}",
                    rec.subject_id,
                    rec.n_samples()
                )));
            }
        }
        Ok(Self { recordings, channel_names })
    }

    pub fn recordings(&self) -> &[EegRecording] {
        &self.recordings
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.recordings[0].n_samples()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.recordings[0].sample_rate_hz
    }

    pub fn get(&self, subject_id: &str) -> Option<&EegRecording> {
        self.recordings.iter().find(|r| r.subject_id == subject_id)
    }

    pub fn subjects(&self) -> Vec<SubjectInfo> {
        self.recordings
            .iter()
            .map(|r| SubjectInfo { subject_id: r.subject_id.clone(), label: r.label })
            .collect()
    }

    /// Recordings whose subject id satisfies `keep`, in the original order.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> Result<Self> {
        let recs = self.recordings.iter().filter(|r| keep(&r.subject_id)).cloned().collect();
        Dataset::new(recs)
    }

    pub fn count(&self, label: Label) -> usize {
        self.recordings.iter().filter(|r| r.label == label).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub subject_id: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub label: Label,
    pub path: PathBuf,
    pub sample_rate_hz: f64,
}

pub fn read_manifest(manifest_path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
        .map_err(|source| Error::Json { path: manifest_path.to_path_buf(), source })?;
    if entries.is_empty() {
        return Err(Error::data(format!("manifest {} lists no subjects", manifest_path.display())));
    }
    let mut ids = HashSet::new();
    for e in &entries {
        if !ids.insert(e.subject_id.as_str()) {
            return Err(Error::data(format!("duplicated subject_id `{}` in manifest", e.subject_id)));
        }
    }
    Ok(entries)
}

/// Signal file of a manifest entry; relative paths are taken from the manifest directory.
pub fn entry_path(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
    if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        manifest_path.parent().unwrap_or_else(|| Path::new(".")).join(&entry.path)
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file))
}

fn read_header(path: &Path, reader: &mut csv::Reader<File>) -> Result<Vec<String>> {
    let header = reader
        .headers()
        .map_err(|source| Error::Csv { path: path.to_path_buf(), source })?;
    Ok(header.iter().map(|h| h.trim().to_string()).collect())
}

/// Channel header of a subject's signal file, without reading samples.
pub fn read_channel_names(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv_reader(path)?;
    read_header(path, &mut reader)
}

fn read_signal_csv(path: &Path, subject_id: &str) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader = csv_reader(path)?;
    let names = read_header(path, &mut reader)?;
    let m = names.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); m];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv { path: path.to_path_buf(), source })?;
        if record.len() != m {
            return Err(Error::data(format!(
                "subject {subject_id}: ragged row {} in {} ({} cells, header has {m})",
                row_idx + 1,
                path.display(),
                record.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::data(format!(
                    "subject {subject_id}: non-numeric cell `{cell}` at row {}, channel {}",
                    row_idx + 1,
                    names[col]
                ))
            })?;
            columns[col].push(v);
        }
    }
    let t = columns.first().map_or(0, Vec::len);
    let mut samples = Array2::zeros((m, t));
    for (j, col) in columns.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            samples[[j, i]] = v;
        }
    }
    Ok((names, samples))
}

/// Loads every subject listed in the manifest. The first subject's header
/// defines the canonical channel order; other files are reordered to it.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let entries = read_manifest(manifest_path)?;
    let mut canonical: Option<Vec<String>> = None;
    let mut recordings = Vec::with_capacity(entries.len());
    for entry in &entries {
        let path = entry_path(manifest_path, entry);
        let (names, samples) = read_signal_csv(&path, &entry.subject_id)?;
        let canon = canonical.get_or_insert_with(|| names.clone());
        let samples = reorder_channels(&entry.subject_id, canon, &names, samples)?;
        recordings.push(EegRecording::new(
            entry.subject_id.clone(),
            entry.label,
            entry.sample_rate_hz,
            canon.clone(),
            samples,
        )?);
    }
    Dataset::new(recordings)
}

fn reorder_channels(
    subject_id: &str,
    canonical: &[String],
    names: &[String],
    samples: Array2<f64>,
) -> Result<Array2<f64>> {
    if names == canonical {
        return Ok(samples);
    }
    if names.len() != canonical.len() {
        return Err(Error::data(format!(
            "subject {subject_id}: channel mismatch, file has {} channels but canonical list has {}",
            names.len(),
            canonical.len()
        )));
    }
    let mut out = Array2::zeros(samples.dim());
    for (dst, want) in canonical.iter().enumerate() {
        let src = names.iter().position(|n| n == want).ok_or_else(|| {
            Error::data(format!("subject {subject_id}: channel mismatch, `{want}` missing"))
        })?;
        out.row_mut(dst).assign(&samples.row(src));
    }
    Ok(out)
}

/// Writes one CSV per subject plus `manifest.json` into `dir`, returning the
/// manifest path. Values use shortest round-trip formatting, so reloading is
/// bit-exact.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for rec in dataset.recordings() {
        let file_name = format!("{}.csv", rec.subject_id);
        let path = dir.join(&file_name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(&path, e);
        writeln!(w, "{}", rec.channel_names.join(",")).map_err(io_err)?;
        let mut line = String::new();
        for t in 0..rec.n_samples() {
            line.clear();
            for j in 0..rec.n_channels() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{:?}", rec.samples[[j, t]]));
            }
            writeln!(w, "{line}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        entries.push(ManifestEntry {
            subject_id: rec.subject_id.clone(),
            label: rec.label,
            path: PathBuf::from(file_name),
            sample_rate_hz: rec.sample_rate_hz,
        });
    }
    let manifest = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&entries).expect("manifest serializes");
    fs::write(&manifest, json + "\n").map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

/// A frequency band contributing sinusoidal power at a fixed amplitude (µV).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandProfile {
    pub bands: Vec<Band>,
}

impl BandProfile {
    fn eeg(delta: f64, theta: f64, alpha: f64, beta: f64) -> Self {
        let band = |lo_hz, hi_hz, amplitude| Band { lo_hz, hi_hz, amplitude };
        Self {
            bands: vec![
                band(0.5, 4.0, delta),
                band(4.0, 8.0, theta),
                band(8.0, 13.0, alpha),
                band(13.0, 30.0, beta),
            ],
        }
    }

    /// Elevated delta and suppressed alpha.
    pub fn default_case() -> Self {
        Self::eeg(3.5, 1.0, 1.0, 0.5)
    }

    pub fn default_control() -> Self {
        Self::eeg(1.2, 1.0, 3.5, 0.5)
    }

    pub fn silent() -> Self {
        Self { bands: Vec::new() }
    }

    pub fn tone(freq_hz: f64, amplitude: f64) -> Self {
        Self { bands: vec![Band { lo_hz: freq_hz, hi_hz: freq_hz, amplitude }] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_case: usize,
    pub n_control: usize,
    pub m_channels: usize,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub case_profile: BandProfile,
    pub control_profile: BandProfile,
    pub noise_sigma: f64,
    /// Relative standard deviation of per-subject, per-band amplitude jitter.
    pub subject_variability: f64,
    /// Sinusoids drawn per band (a zero-width band always yields one).
    pub tones_per_band: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_case: 4,
            n_control: 4,
            m_channels: 16,
            duration_s: 60.0,
            sample_rate_hz: 128.0,
            case_profile: BandProfile::default_case(),
            control_profile: BandProfile::default_control(),
            noise_sigma: 1.0,
            subject_variability: 0.1,
            tones_per_band: 3,
            seed: 0,
        }
    }
}

pub fn default_channel_names(m: usize) -> Vec<String> {
    if m <= MONTAGE_10_20.len() {
        MONTAGE_10_20[..m].iter().map(|s| s.to_string()).collect()
    } else {
        (0..m).map(|i| format!("Ch{}", i + 1)).collect()
    }
}

/// Deterministic cohort: each channel is a sum of band-limited sinusoids with
/// class-dependent amplitudes plus white Gaussian noise.
pub fn generate_synthetic_cohort(cfg: &SynthConfig) -> Result<Dataset> {
    if !(cfg.duration_s > 0.0) || !(cfg.sample_rate_hz > 0.0) {
        return Err(Error::param("duration and sample rate must be positive"));
    }
    if cfg.n_case == 0 || cfg.n_control == 0 || cfg.m_channels == 0 {
        return Err(Error::param("subject and channel counts must be at least 1"));
    }
    if cfg.noise_sigma < 0.0 || cfg.subject_variability < 0.0 {
        return Err(Error::param("noise_sigma and subject_variability must be non-negative"));
    }
    let exact = cfg.duration_s * cfg.sample_rate_hz;
    let t = exact.round();
    if (exact - t).abs() > 1e-9 * exact.max(1.0) || t < 2.0 {
        return Err(Error::param(format!(
            "duration x rate = {exact} must be an integer sample count >= 2"
        )));
    }
    let t = t as usize;
    let names = default_channel_names(cfg.m_channels);
    let subjects = (0..cfg.n_case)
        .map(|i| (format!("case{i:03}"), Label::Case))
        .chain((0..cfg.n_control).map(|i| (format!("ctrl{i:03}"), Label::Control)));

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut recordings = Vec::with_capacity(cfg.n_case + cfg.n_control);
    for (idx, (id, label)) in subjects.enumerate() {
        let profile = match label {
            Label::Case => &cfg.case_profile,
            Label::Control => &cfg.control_profile,
        };
        let mut rng = rng_for(cfg.seed, "synth-subject", idx as u64);
        let mut samples = Array2::zeros((cfg.m_channels, t));
        for j in 0..cfg.m_channels {
            let mut row = samples.row_mut(j);
            for band in &profile.bands {
                let tones = if band.hi_hz > band.lo_hz { cfg.tones_per_band.max(1) } else { 1 };
                let jitter = (1.0 + cfg.subject_variability * unit.sample(&mut rng)).max(0.0);
                let amp = band.amplitude * jitter / (tones as f64).sqrt();
                for _ in 0..tones {
                    let freq = band.lo_hz + rng.gen::<f64>() * (band.hi_hz - band.lo_hz);
                    let phase = rng.gen::<f64>() * 2.0 * PI;
                    if amp == 0.0 {
                        continue;
                    }
                    for (i, x) in row.iter_mut().enumerate() {
                        let time = i as f64 / cfg.sample_rate_hz;
                        *x += amp * (2.0 * PI * freq * time + phase).sin();
                    }
                }
            }
            if cfg.noise_sigma > 0.0 {
                for x in row.iter_mut() {
                    *x += cfg.noise_sigma * unit.sample(&mut rng);
                }
            }
        }
        recordings.push(EegRecording::new(id, label, cfg.sample_rate_hz, names.clone(), samples)?);
    }
    Dataset::new(recordings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { n_case: 2, n_control: 2, m_channels: 2, seed: 7, ..SynthConfig::default() }
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let a = generate_synthetic_cohort(&small()).unwrap();
        let b = generate_synthetic_cohort(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a.n_samples(), 7680);
        let c = generate_synthetic_cohort(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn silent_control_without_noise_is_zero() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            control_profile: BandProfile::silent(),
            ..small()
        };
        let d = generate_synthetic_cohort(&cfg).unwrap();
        for rec in d.recordings().iter().filter(|r| r.label == Label::Control) {
            assert!(rec.samples.iter().all(|&x| x == 0.0));
        }
        for rec in d.recordings().iter().filter(|r| r.label == Label::Case) {
            assert!(rec.samples.iter().any(|&x| x != 0.0));
        }
    }

    #[test]
    fn rejects_bad_durations() {
        assert!(generate_synthetic_cohort(&SynthConfig { duration_s: 0.0, ..small() }).is_err());
        assert!(generate_synthetic_cohort(&SynthConfig { sample_rate_hz: -1.0, ..small() }).is_err());
        assert!(generate_synthetic_cohort(&SynthConfig { duration_s: 1.001, ..small() }).is_err());
    }

    #[test]
    fn recording_invariants() {
        let names = vec!["A".to_string(), "A".to_string()];
        assert!(EegRecording::new("s", Label::Case, 128.0, names, Array2::zeros((2, 4))).is_err());
        let names = vec!["A".to_string()];
        assert!(EegRecording::new("s", Label::Case, 0.0, names.clone(), Array2::zeros((1, 4))).is_err());
        assert!(EegRecording::new("s", Label::Case, 1.0, names, Array2::zeros((2, 4))).is_err());
    }

    #[test]
    fn dataset_rejects_mixed_layouts() {
        let a = EegRecording::new("a", Label::Case, 128.0, vec!["X".into()], Array2::zeros((1, 4))).unwrap();
        let b = EegRecording::new("b", Label::Case, 128.0, vec!["Y".into()], Array2::zeros((1, 4))).unwrap();
        let c = EegRecording::new("a", Label::Control, 128.0, vec!["X".into()], Array2::zeros((1, 4))).unwrap();
        let d = EegRecording::new("d", Label::Control, 128.0, vec!["X".into()], Array2::zeros((1, 5))).unwrap();
        assert!(Dataset::new(vec![a.clone(), b]).is_err());
        assert!(Dataset::new(vec![a.clone(), c]).is_err());
        assert!(Dataset::new(vec![a, d]).is_err());
        assert!(Dataset::new(vec![]).is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!(Label::parse("Case").unwrap(), Label::Case);
        assert_eq!(Label::parse("control").unwrap(), Label::Control);
        assert!(Label::parse("sick").is_err());
    }
}
