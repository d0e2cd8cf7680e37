//! Search spaces and cross-validated objectives for tuning the network and
//! the downstream classifiers.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::folds::{stratified_folds, training_indices};
use crate::bayesopt::{optimize, BoConfig, BoState, Dim, SearchSpace};
use crate::classify::{fit, ClassifierKind, ClassifierSpec, LabeledFeatures, SvmKernel};
use crate::error::{Error, Result};
use crate::pairing::{balance_pairs, enumerate_pairs};
use crate::seed::derive_seed;
use crate::siamese::{pair_accuracy, train, NetConfig, SiameseModel};
use crate::signal::SubjectInfo;
use crate::spectral::{ImageStore, StftConfig};

fn space(dims: Vec<Dim>) -> SearchSpace {
    SearchSpace::new(dims).expect("built-in search space is valid")
}

/// Network and normalisation hyperparameters searched together.
pub fn snn_space() -> SearchSpace {
    space(vec![
        Dim::log_continuous("l1_lambda", 1e-3, 1e-1),
        Dim::continuous("margin", 1.0, 2.0),
        Dim::log_continuous("learning_rate", 1e-6, 1e-3),
        Dim::discrete("kernel_size", (3..=12).map(f64::from)),
        Dim::discrete("output_dim", (1..=7).map(|v| f64::from(2 * v))),
        Dim::continuous("upper_value", 100.0, 500.0),
    ])
}

pub fn apply_snn_point(net: &NetConfig, stft: &StftConfig, raw: &[f64]) -> (NetConfig, StftConfig) {
    let mut net = net.clone();
    let mut stft = stft.clone();
    net.l1_lambda = raw[0];
    net.margin = raw[1];
    net.learning_rate = raw[2];
    net.kernel_size = raw[3].round() as usize;
    net.output_dim = raw[4].round() as usize;
    stft.upper_value = raw[5];
    (net, stft)
}

/// Empty for naive Bayes, which has nothing to tune.
pub fn classifier_space(kind: ClassifierKind) -> SearchSpace {
    match kind {
        ClassifierKind::Knn => space(vec![Dim::discrete("k", (2..=8).map(f64::from))]),
        ClassifierKind::Nb => SearchSpace::default(),
        ClassifierKind::Svm => space(vec![
            Dim::discrete("kernel", [0.0, 1.0]),
            Dim::continuous("c", 0.5, 5.0),
            Dim::log_continuous("gamma", 1e-5, 1.0),
        ]),
        ClassifierKind::Rf => space(vec![Dim::discrete("n_estimators", [5.0, 10.0, 15.0, 20.0, 25.0])]),
        ClassifierKind::Xgb => space(vec![
            Dim::discrete("max_depth", (3..=7).map(f64::from)),
            Dim::log_continuous("learning_rate", 1e-3, 0.1),
            Dim::discrete("n_estimators", [10.0, 50.0, 100.0, 200.0]),
        ]),
    }
}

pub fn classifier_from_point(kind: ClassifierKind, raw: &[f64]) -> ClassifierSpec {
    match kind {
        ClassifierKind::Knn => ClassifierSpec::Knn { k: raw[0].round() as usize },
        ClassifierKind::Nb => ClassifierSpec::Nb,
        ClassifierKind::Svm => ClassifierSpec::Svm {
            kernel: if raw[0] < 0.5 { SvmKernel::Linear } else { SvmKernel::Rbf },
            c: raw[1],
            gamma: raw[2],
        },
        ClassifierKind::Rf => ClassifierSpec::Rf { n_estimators: raw[0].round() as usize },
        ClassifierKind::Xgb => ClassifierSpec::Xgb {
            max_depth: raw[0].round() as usize,
            learning_rate: raw[1],
            n_estimators: raw[2].round() as usize,
        },
    }
}

/// Mean validation pair accuracy over `k` subject-stratified folds of the
/// given subjects. Pairs are built inside each training fold only; `raw`
/// holds unnormalised images and is normalised with `stft.upper_value`.
pub fn snn_objective(
    raw: &ImageStore,
    subjects: &[usize],
    net: &NetConfig,
    stft: &StftConfig,
    k: usize,
    balance: bool,
    seed: u64,
) -> Result<f64> {
    let store = raw.select(subjects).normalized(stft.upper_value)?;
    let c = store.n_channels();
    let folds = stratified_folds(store.subjects(), k, derive_seed(seed, "snn-inner-folds", 0))?;
    let mut accs = Vec::with_capacity(k);
    for (fi, val) in folds.iter().enumerate() {
        if val.len() < 2 {
            continue;
        }
        let train_store = store.select(&training_indices(store.subjects().len(), val));
        let mut pairs = enumerate_pairs(train_store.subjects(), c);
        if balance {
            pairs = balance_pairs(&pairs, c, derive_seed(seed, "snn-inner-balance", fi as u64))?;
        }
        let mut cfg = net.clone();
        cfg.seed = derive_seed(seed, "snn-inner-train", fi as u64);
        let model = SiameseModel::new(cfg, store.image_shape())?;
        let trained = train(model, &train_store, &pairs)?;
        let val_store = store.select(val);
        let val_pairs = enumerate_pairs(val_store.subjects(), c);
        accs.push(pair_accuracy(&trained.model, &val_store, &val_pairs, net.pair_threshold)?);
    }
    if accs.is_empty() {
        return Err(Error::data("no validation fold holds two subjects"));
    }
    Ok(accs.iter().sum::<f64>() / accs.len() as f64)
}

fn subject_infos(features: &LabeledFeatures) -> Vec<SubjectInfo> {
    features.subjects().into_iter().map(|(subject_id, label)| SubjectInfo { subject_id, label }).collect()
}

/// Mean channel-level validation accuracy over `k` subject-stratified folds.
pub fn classifier_objective(features: &LabeledFeatures, spec: &ClassifierSpec, k: usize, seed: u64) -> Result<f64> {
    let subjects = subject_infos(features);
    let folds = stratified_folds(&subjects, k, derive_seed(seed, "clf-inner-folds", 0))?;
    let mut total = 0.0;
    for (fi, val) in folds.iter().enumerate() {
        let ids: HashSet<&str> = val.iter().map(|&i| subjects[i].subject_id.as_str()).collect();
        let train = features.filter(|r| !ids.contains(r.subject_id.as_str()));
        let test = features.filter(|r| ids.contains(r.subject_id.as_str()));
        let model = fit(spec, &train, derive_seed(seed, "clf-inner-fit", fi as u64))?;
        let preds = model.predict(&test)?;
        let hits = preds.iter().zip(&test.rows).filter(|(p, r)| p.label == r.label).count();
        total += hits as f64 / test.len() as f64;
    }
    Ok(total / folds.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnnTuning {
    pub net: NetConfig,
    pub stft: StftConfig,
    pub best_value: f64,
    pub state: BoState,
}

#[allow(clippy::too_many_arguments)]
pub fn tune_snn(
    raw: &ImageStore,
    subjects: &[usize],
    net: &NetConfig,
    stft: &StftConfig,
    bo: &BoConfig,
    k: usize,
    balance: bool,
) -> Result<SnnTuning> {
    let space = snn_space();
    let outcome = optimize(&space, bo, |x| {
        let (n, s) = apply_snn_point(net, stft, x);
        snn_objective(raw, subjects, &n, &s, k, balance, bo.seed)
    })?;
    let (net, stft) = apply_snn_point(net, stft, &outcome.best_raw);
    Ok(SnnTuning { net, stft, best_value: outcome.best_value, state: outcome.state })
}

/// Best spec by cross-validated accuracy; naive Bayes returns without search.
pub fn tune_classifier(
    features: &LabeledFeatures,
    kind: ClassifierKind,
    bo: &BoConfig,
    k: usize,
) -> Result<(ClassifierSpec, Option<BoState>)> {
    let space = classifier_space(kind);
    if space.is_empty() {
        return Ok((ClassifierSpec::default_for(kind), None));
    }
    let outcome = optimize(&space, bo, |x| classifier_objective(features, &classifier_from_point(kind, x), k, bo.seed))?;
    Ok((classifier_from_point(kind, &outcome.best_raw), Some(outcome.state)))
}
