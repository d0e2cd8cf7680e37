use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, render_table, write_fold_csv, FoldResult, MetricsReport};
use super::tuning::{tune_classifier, tune_snn, SnnTuning};
use crate::bayesopt::{BoConfig, BoState};
use crate::classify::{fit, ClassifierKind, ClassifierSpec, FeatureRow, LabeledFeatures};
use crate::error::{Error, Result, StageExt};
use crate::pairing::{balance_pairs, enumerate_pairs};
use crate::seed::derive_seed;
use crate::siamese::{extract_features, save_checkpoint, train, write_loss_trace, NetConfig, SiameseModel};
use crate::signal::{Dataset, Label, SubjectInfo};
use crate::spectral::{compute_raw_images, fft_features, ImageStore, StftConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frontend {
    /// Full-length magnitude spectrum per channel.
    Fft,
    /// Short-time spectral images embedded by the Siamese network.
    DstftSnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PipelineId {
    pub frontend: Frontend,
    pub classifier: ClassifierKind,
}

impl PipelineId {
    pub fn all() -> Vec<PipelineId> {
        [Frontend::Fft, Frontend::DstftSnn]
            .into_iter()
            .flat_map(|frontend| ClassifierKind::ALL.into_iter().map(move |classifier| PipelineId { frontend, classifier }))
            .collect()
    }
}

impl fmt::Display for PipelineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.frontend {
            Frontend::Fft => "FFT",
            Frontend::DstftSnn => "DSTFT-SNN",
        };
        write!(f, "{prefix}-{}", self.classifier.display())
    }
}

impl FromStr for PipelineId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (frontend, rest) = if let Some(rest) = s.strip_prefix("DSTFT-SNN-") {
            (Frontend::DstftSnn, rest)
        } else if let Some(rest) = s.strip_prefix("FFT-") {
            (Frontend::Fft, rest)
        } else {
            return Err(Error::param(format!("unknown pipeline `{s}`; expected FFT-<clf> or DSTFT-SNN-<clf>")));
        };
        let classifier = rest.parse().map_err(|_| Error::param(format!("unknown classifier in pipeline `{s}`")))?;
        Ok(PipelineId { frontend, classifier })
    }
}

impl Serialize for PipelineId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PipelineId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Network trained once on every subject, then classifier LOOCV.
    #[default]
    Paper,
    /// Network retrained inside every LOOCV fold without the held-out subject.
    Strict,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Mode::Paper),
            "strict" => Ok(Mode::Strict),
            other => Err(Error::param(format!("unknown mode `{other}`; expected paper or strict"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub n_init: usize,
    pub n_acquisitions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub net: NetConfig,
    pub fft_max_freq_hz: f64,
    /// Fixed classifier; its kind must match the pipeline. Ignored when tuning.
    pub classifier: Option<ClassifierSpec>,
    pub tune_snn: bool,
    pub tune_classifier: bool,
    pub snn_budget: Budget,
    pub classifier_budget: Budget,
    pub inner_folds: usize,
    pub mode: Mode,
    pub balance_pairs: bool,
    /// Master seed; overrides `net.seed`.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            net: NetConfig::default(),
            fft_max_freq_hz: 30.0,
            classifier: None,
            tune_snn: false,
            tune_classifier: false,
            snn_budget: Budget { n_init: 5, n_acquisitions: 50 },
            classifier_budget: Budget { n_init: 5, n_acquisitions: 10 },
            inner_folds: 5,
            mode: Mode::Paper,
            balance_pairs: false,
            seed: 0,
        }
    }
}

/// Which training structures could see each held-out subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub folds_checked: usize,
    /// True in paper mode: the network is trained once on all subjects.
    pub network_saw_held_out: bool,
    pub classifier_saw_held_out: bool,
}

/// Everything needed to rerun and interpret a pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub pipeline: PipelineId,
    pub config: PipelineConfig,
    pub n_subjects: usize,
    pub n_channels: usize,
    pub resolved_net: Option<NetConfig>,
    pub resolved_stft: Option<StftConfig>,
    /// Subject excluded from the network tuning partition.
    pub snn_tuning_holdout: Option<String>,
    pub snn_tuning_best: Option<f64>,
    pub fold_classifiers: Vec<(String, ClassifierSpec)>,
    pub audit: LeakageAudit,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub report: MetricsReport,
    pub manifest: RunManifest,
    pub snn_tuning: Option<BoState>,
    pub classifier_tuning: Vec<(String, BoState)>,
    pub loss_trace: Vec<f64>,
    pub model: Option<SiameseModel>,
    pub features: Option<LabeledFeatures>,
}

/// Full-spectrum magnitudes up to `max_freq_hz` for every channel.
pub fn fft_feature_table(dataset: &Dataset, max_freq_hz: f64) -> Result<LabeledFeatures> {
    let c = dataset.n_channels();
    let jobs: Vec<(usize, usize)> = (0..dataset.len()).flat_map(|s| (0..c).map(move |ch| (s, ch))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(s, ch)| {
            let rec = &dataset.recordings()[s];
            Ok(FeatureRow {
                subject_id: rec.subject_id.clone(),
                channel: ch,
                label: rec.label,
                values: fft_features(&rec.channel(ch).to_vec(), rec.sample_rate_hz, max_freq_hz)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledFeatures::new(rows)
}

fn check_cohort(subjects: &[SubjectInfo]) -> Result<()> {
    if subjects.len() < 2 {
        return Err(Error::data(format!("leave-one-out needs at least 2 subjects, got {}", subjects.len())));
    }
    for label in [Label::Case, Label::Control] {
        if !subjects.iter().any(|s| s.label == label) {
            return Err(Error::data(format!("cohort has no {label} subjects")));
        }
    }
    Ok(())
}

fn sorted_subjects(mut subjects: Vec<SubjectInfo>) -> Vec<SubjectInfo> {
    subjects.sort();
    subjects
}

/// Leave-one-subject-out over a feature table. `predict` receives the fold
/// index, the training rows and the held-out rows, and returns one label per
/// held-out row plus the classifier it used.
pub fn loocv_with<F>(features: &LabeledFeatures, predict: F) -> Result<Vec<FoldResult>>
where
    F: Fn(usize, &LabeledFeatures, &LabeledFeatures) -> Result<(Vec<Label>, Option<ClassifierSpec>)> + Sync,
{
    let subjects = sorted_subjects(
        features.subjects().into_iter().map(|(subject_id, label)| SubjectInfo { subject_id, label }).collect(),
    );
    check_cohort(&subjects)?;
    subjects
        .par_iter()
        .enumerate()
        .map(|(fi, held)| {
            let train = features.filter(|r| r.subject_id != held.subject_id);
            let test = features.filter(|r| r.subject_id == held.subject_id);
            let (labels, spec) = predict(fi, &train, &test)?;
            if labels.len() != test.len() {
                return Err(Error::data(format!("fold {fi}: {} predictions for {} instances", labels.len(), test.len())));
            }
            Ok(FoldResult::new(held.subject_id.clone(), held.label, labels, spec))
        })
        .collect()
}

struct ClassifierPlan<'a> {
    kind: ClassifierKind,
    cfg: &'a PipelineConfig,
}

impl ClassifierPlan<'_> {
    fn bo(&self, fold: usize) -> BoConfig {
        BoConfig {
            n_init: self.cfg.classifier_budget.n_init,
            n_acquisitions: self.cfg.classifier_budget.n_acquisitions,
            seed: derive_seed(self.cfg.seed, "bo-clf", fold as u64),
            ..BoConfig::default()
        }
    }

    /// Tunes (if requested) and fits on `train`, then labels `test`.
    fn run(&self, fold: usize, train: &LabeledFeatures, test: &LabeledFeatures) -> Result<(Vec<Label>, ClassifierSpec, Option<BoState>)> {
        let (spec, state) = if self.cfg.tune_classifier {
            tune_classifier(train, self.kind, &self.bo(fold), self.cfg.inner_folds).stage("tune-clf")?
        } else {
            (self.cfg.classifier.clone().unwrap_or_else(|| ClassifierSpec::default_for(self.kind)), None)
        };
        let model = fit(&spec, train, derive_seed(self.cfg.seed, "clf-fit", fold as u64)).stage("fit-clf")?;
        let labels = model.predict(test)?.into_iter().map(|p| p.label).collect();
        Ok((labels, spec, state))
    }
}

struct FoldOutput {
    result: FoldResult,
    tuning: Option<BoState>,
    loss_trace: Vec<f64>,
}

fn classify_all(features: &LabeledFeatures, plan: &ClassifierPlan) -> Result<Vec<FoldOutput>> {
    let states = std::sync::Mutex::new(Vec::new());
    let folds = loocv_with(features, |fi, train, test| {
        let (labels, spec, state) = plan.run(fi, train, test)?;
        states.lock().expect("tuning state lock").push((fi, state));
        Ok((labels, Some(spec)))
    })
    .stage("loocv")?;
    let mut states = states.into_inner().expect("tuning state lock");
    states.sort_by_key(|s| s.0);
    Ok(folds
        .into_iter()
        .zip(states)
        .map(|(result, (_, tuning))| FoldOutput { result, tuning, loss_trace: Vec::new() })
        .collect())
}

fn train_network(store: &ImageStore, net: &NetConfig, balance: bool, seed: u64) -> Result<(SiameseModel, Vec<f64>)> {
    let c = store.n_channels();
    let mut pairs = enumerate_pairs(store.subjects(), c);
    if balance {
        pairs = balance_pairs(&pairs, c, derive_seed(seed, "pair-balance", 0))?;
    }
    let mut cfg = net.clone();
    cfg.seed = seed;
    let model = SiameseModel::new(cfg, store.image_shape())?;
    let trained = train(model, store, &pairs)?;
    Ok((trained.model, trained.loss_trace))
}

/// Runs one Table-2 style pipeline end to end and, when `out` is given,
/// writes the report, fold table, manifest and intermediate artifacts there.
pub fn run_pipeline(id: PipelineId, dataset: &Dataset, cfg: &PipelineConfig, out: Option<&Path>) -> Result<PipelineRun> {
    if let Some(spec) = &cfg.classifier {
        if spec.kind() != id.classifier {
            return Err(Error::param(format!("classifier {:?} does not match pipeline {id}", spec.kind())));
        }
        spec.validate()?;
    }
    let subjects = sorted_subjects(dataset.subjects());
    check_cohort(&subjects)?;
    let plan = ClassifierPlan { kind: id.classifier, cfg };
    let mut manifest = RunManifest {
        pipeline: id,
        config: cfg.clone(),
        n_subjects: dataset.len(),
        n_channels: dataset.n_channels(),
        resolved_net: None,
        resolved_stft: None,
        snn_tuning_holdout: None,
        snn_tuning_best: None,
        fold_classifiers: Vec::new(),
        audit: LeakageAudit { folds_checked: 0, network_saw_held_out: false, classifier_saw_held_out: false },
    };
    let mut snn_tuning = None;
    let mut model = None;
    let mut features = None;
    let mut loss_trace = Vec::new();

    let folds: Vec<FoldOutput> = match id.frontend {
        Frontend::Fft => {
            let table = fft_feature_table(dataset, cfg.fft_max_freq_hz).stage("fft")?;
            let folds = classify_all(&table, &plan)?;
            features = Some(table);
            folds
        }
        Frontend::DstftSnn => {
            let raw = compute_raw_images(dataset, &cfg.stft).stage("stft")?;
            let (net, stft) = if cfg.tune_snn {
                // tuning partition: every subject but the lexicographically first
                let holdout = &subjects[0].subject_id;
                let part: Vec<usize> =
                    (0..raw.subjects().len()).filter(|&i| &raw.subjects()[i].subject_id != holdout).collect();
                let bo = BoConfig {
                    n_init: cfg.snn_budget.n_init,
                    n_acquisitions: cfg.snn_budget.n_acquisitions,
                    seed: derive_seed(cfg.seed, "bo-snn", 0),
                    ..BoConfig::default()
                };
                let SnnTuning { net, stft, best_value, state } =
                    tune_snn(&raw, &part, &cfg.net, &cfg.stft, &bo, cfg.inner_folds, cfg.balance_pairs).stage("tune-snn")?;
                manifest.snn_tuning_holdout = Some(holdout.clone());
                manifest.snn_tuning_best = Some(best_value);
                snn_tuning = Some(state);
                (net, stft)
            } else {
                (cfg.net.clone(), cfg.stft.clone())
            };
            let store = raw.normalized(stft.upper_value).stage("stft")?;
            manifest.resolved_net = Some(NetConfig { seed: cfg.seed, ..net.clone() });
            manifest.resolved_stft = Some(stft);
            match cfg.mode {
                Mode::Paper => {
                    let (m, trace) = train_network(&store, &net, cfg.balance_pairs, cfg.seed).stage("train-snn")?;
                    let table = extract_features(&m, &store).stage("extract")?;
                    manifest.audit.network_saw_held_out = true;
                    let folds = classify_all(&table, &plan)?;
                    loss_trace = trace;
                    model = Some(m);
                    features = Some(table);
                    folds
                }
                Mode::Strict => strict_folds(&store, &subjects, &net, &plan)?,
            }
        }
    };

    let mut fold_results = Vec::with_capacity(folds.len());
    let mut classifier_tuning = Vec::new();
    for f in folds {
        if let Some(spec) = &f.result.classifier {
            manifest.fold_classifiers.push((f.result.held_out_subject.clone(), spec.clone()));
        }
        if let Some(state) = f.tuning {
            classifier_tuning.push((f.result.held_out_subject.clone(), state));
        }
        if loss_trace.is_empty() && !f.loss_trace.is_empty() {
            loss_trace = f.loss_trace;
        }
        fold_results.push(f.result);
    }
    manifest.audit.folds_checked = fold_results.len();
    let report = compute_metrics(&id.to_string(), fold_results);
    let run = PipelineRun { report, manifest, snn_tuning, classifier_tuning, loss_trace, model, features };
    if let Some(dir) = out {
        write_artifacts(&run, dir).stage("write-artifacts")?;
    }
    Ok(run)
}

/// Per-fold network training on the training subjects only. The audit
/// fails the run if the held-out subject reaches any training structure.
fn strict_folds(store: &ImageStore, subjects: &[SubjectInfo], net: &NetConfig, plan: &ClassifierPlan) -> Result<Vec<FoldOutput>> {
    let cfg = plan.cfg;
    subjects
        .par_iter()
        .enumerate()
        .map(|(fi, held)| {
            let train_idx: Vec<usize> =
                (0..store.subjects().len()).filter(|&i| store.subjects()[i].subject_id != held.subject_id).collect();
            let train_store = store.select(&train_idx);
            if train_store.subject_index(&held.subject_id).is_some() {
                return Err(Error::data(format!("leakage: {} present in fold {fi} network training", held.subject_id)));
            }
            let seed = derive_seed(cfg.seed, "snn-strict", fi as u64);
            let (model, trace) = train_network(&train_store, net, cfg.balance_pairs, seed).stage("train-snn")?;
            let table = extract_features(&model, store).stage("extract")?;
            let train = table.filter(|r| r.subject_id != held.subject_id);
            let test = table.filter(|r| r.subject_id == held.subject_id);
            if train.rows.iter().any(|r| r.subject_id == held.subject_id) {
                return Err(Error::data(format!("leakage: {} present in fold {fi} classifier training", held.subject_id)));
            }
            let (labels, spec, tuning) = plan.run(fi, &train, &test)?;
            Ok(FoldOutput {
                result: FoldResult::new(held.subject_id.clone(), held.label, labels, Some(spec)),
                tuning,
                loss_trace: trace,
            })
        })
        .collect::<Result<Vec<_>>>()
        .stage("loocv")
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_artifacts(run: &PipelineRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&run.report, &dir.join("report.json"))?;
    fs::write(dir.join("report.txt"), render_table(std::slice::from_ref(&run.report)))
        .map_err(|e| Error::io(dir.join("report.txt"), e))?;
    write_fold_csv(&run.report, &dir.join("folds.csv"))?;
    write_json(&run.manifest, &dir.join("run_manifest.json"))?;
    if let Some(features) = &run.features {
        features.write_csv(&dir.join("features.csv"))?;
    }
    if let Some(model) = &run.model {
        save_checkpoint(model, &dir.join("snn_checkpoint.json"))?;
    }
    if !run.loss_trace.is_empty() {
        write_loss_trace(&run.loss_trace, &dir.join("loss_trace.csv"))?;
    }
    if let Some(state) = &run.snn_tuning {
        state.write_trace_csv(&dir.join("snn_bo_trace.csv"))?;
    }
    if !run.classifier_tuning.is_empty() {
        let sub = dir.join("classifier_bo");
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (subject, state) in &run.classifier_tuning {
            state.write_trace_csv(&sub.join(format!("{subject}.csv")))?;
        }
    }
    Ok(())
}
