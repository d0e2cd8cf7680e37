//! Downstream binary classifiers over per-channel feature vectors.
//!
//! `Case` is the positive class throughout: scores are oriented so larger
//! means more `Case`, and every tie resolves to `Case`.

mod boosting;
mod forest;
mod knn;
mod naive_bayes;
mod svm;
mod tree;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Label;

pub use boosting::GradientBoosting;
pub use forest::RandomForest;
pub use knn::KnnModel;
pub use naive_bayes::GaussianNb;
pub use svm::{SvmKernel, SvmModel};
pub use tree::{BinnedMatrix, Tree, TreeParams};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub subject_id: String,
    pub channel: usize,
    pub label: Label,
    pub values: Vec<f64>,
}

/// Feature vectors labelled by subject and channel.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatures {
    dim: usize,
    pub rows: Vec<FeatureRow>,
}

impl LabeledFeatures {
    pub fn new(rows: Vec<FeatureRow>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.values.len());
        if let Some(bad) = rows.iter().find(|r| r.values.len() != dim) {
            return Err(Error::data(format!(
                "feature row for subject {} channel {} has {} values, expected {dim}",
                bad.subject_id,
                bad.channel,
                bad.values.len()
            )));
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.rows.len(), self.dim));
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r.values.iter().enumerate() {
                m[[i, j]] = *v;
            }
        }
        m
    }

    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Distinct subject ids in first-appearance order, with their labels.
    pub fn subjects(&self) -> Vec<(String, Label)> {
        let mut out: Vec<(String, Label)> = Vec::new();
        for r in &self.rows {
            if out.last().map(|(s, _)| s != &r.subject_id).unwrap_or(true)
                && !out.iter().any(|(s, _)| s == &r.subject_id)
            {
                out.push((r.subject_id.clone(), r.label));
            }
        }
        out
    }

    pub fn filter(&self, mut keep: impl FnMut(&FeatureRow) -> bool) -> LabeledFeatures {
        LabeledFeatures { dim: self.dim, rows: self.rows.iter().filter(|r| keep(r)).cloned().collect() }
    }

    /// CSV with columns `subject_id, channel, f_1..f_q, label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        let cols: Vec<String> = (1..=self.dim).map(|i| format!("f_{i}")).collect();
        writeln!(w, "subject_id,channel,{},label", cols.join(",")).map_err(io_err)?;
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{},{},{},{}", r.subject_id, r.channel, vals.join(","), r.label).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let width = reader.headers().map_err(csv_err)?.len();
        if width < 3 {
            return Err(Error::data(format!("{} has too few columns for a feature table", path.display())));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let num = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::data(format!("row {}: non-numeric value `{s}`", i + 1)))
            };
            let channel = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::data(format!("row {}: bad channel `{}`", i + 1, &rec[1])))?;
            let values = (2..width - 1).map(|j| num(&rec[j])).collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                subject_id: rec[0].to_string(),
                channel,
                label: Label::parse(&rec[width - 1])?,
                values,
            });
        }
        LabeledFeatures::new(rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    Nb,
    Svm,
    Rf,
    Xgb,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] =
        [ClassifierKind::Knn, ClassifierKind::Nb, ClassifierKind::Rf, ClassifierKind::Svm, ClassifierKind::Xgb];

    /// Display name used in pipeline identifiers (`kNN`, `NB`, ...).
    pub fn display(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "kNN",
            ClassifierKind::Nb => "NB",
            ClassifierKind::Svm => "SVM",
            ClassifierKind::Rf => "RF",
            ClassifierKind::Xgb => "XGB",
        }
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(ClassifierKind::Knn),
            "nb" => Ok(ClassifierKind::Nb),
            "svm" => Ok(ClassifierKind::Svm),
            "rf" => Ok(ClassifierKind::Rf),
            "xgb" | "gbt" => Ok(ClassifierKind::Xgb),
            other => Err(Error::param(format!("unknown classifier `{other}`"))),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Knn { k: usize },
    Nb,
    Svm { kernel: SvmKernel, c: f64, gamma: f64 },
    Rf { n_estimators: usize },
    Xgb { max_depth: usize, learning_rate: f64, n_estimators: usize },
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::Knn { .. } => ClassifierKind::Knn,
            ClassifierSpec::Nb => ClassifierKind::Nb,
            ClassifierSpec::Svm { .. } => ClassifierKind::Svm,
            ClassifierSpec::Rf { .. } => ClassifierKind::Rf,
            ClassifierSpec::Xgb { .. } => ClassifierKind::Xgb,
        }
    }

    /// Untuned defaults, each inside its tuning domain.
    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Knn => ClassifierSpec::Knn { k: 5 },
            ClassifierKind::Nb => ClassifierSpec::Nb,
            ClassifierKind::Svm => ClassifierSpec::Svm { kernel: SvmKernel::Rbf, c: 1.0, gamma: 0.1 },
            ClassifierKind::Rf => ClassifierSpec::Rf { n_estimators: 15 },
            ClassifierKind::Xgb => ClassifierSpec::Xgb { max_depth: 3, learning_rate: 0.1, n_estimators: 50 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ClassifierSpec::Knn { k } => k >= 1,
            ClassifierSpec::Nb => true,
            ClassifierSpec::Svm { c, gamma, .. } => c > 0.0 && gamma > 0.0,
            ClassifierSpec::Rf { n_estimators } => n_estimators >= 1,
            ClassifierSpec::Xgb { max_depth, learning_rate, n_estimators } => {
                max_depth >= 1 && learning_rate > 0.0 && n_estimators >= 1
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("inadmissible classifier hyperparameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Larger means more `Case`: a probability, vote share or decision value.
    pub score: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Knn(KnnModel),
    Nb(GaussianNb),
    Svm(SvmModel),
    Rf(RandomForest),
    Xgb(GradientBoosting),
}

pub(crate) fn positive(label: Label) -> f64 {
    if label == Label::Case {
        1.0
    } else {
        0.0
    }
}

fn require_both_classes(labels: &[Label], what: &str) -> Result<()> {
    let cases = labels.iter().filter(|&&l| l == Label::Case).count();
    if cases == 0 || cases == labels.len() {
        return Err(Error::data(format!("{what} needs training examples of both classes")));
    }
    Ok(())
}

/// Trains the classifier described by `spec`.
pub fn fit(spec: &ClassifierSpec, train: &LabeledFeatures, seed: u64) -> Result<FittedModel> {
    spec.validate()?;
    if train.len() < 2 {
        return Err(Error::data(format!("need at least 2 training rows, got {}", train.len())));
    }
    let x = train.matrix();
    let y = train.labels();
    Ok(match *spec {
        ClassifierSpec::Knn { k } => FittedModel::Knn(KnnModel::fit(x, y, k)),
        ClassifierSpec::Nb => {
            require_both_classes(&y, "naive Bayes")?;
            FittedModel::Nb(GaussianNb::fit(&x, &y))
        }
        ClassifierSpec::Svm { kernel, c, gamma } => {
            require_both_classes(&y, "SVM")?;
            FittedModel::Svm(SvmModel::fit(&x, &y, kernel, c, gamma, 1e-3, 100)?)
        }
        ClassifierSpec::Rf { n_estimators } => FittedModel::Rf(RandomForest::fit(&x, &y, n_estimators, seed)),
        ClassifierSpec::Xgb { max_depth, learning_rate, n_estimators } => {
            FittedModel::Xgb(GradientBoosting::fit(&x, &y, max_depth, learning_rate, n_estimators))
        }
    })
}

impl FittedModel {
    pub fn dim(&self) -> usize {
        match self {
            FittedModel::Knn(m) => m.dim(),
            FittedModel::Nb(m) => m.dim(),
            FittedModel::Svm(m) => m.dim(),
            FittedModel::Rf(m) => m.dim(),
            FittedModel::Xgb(m) => m.dim(),
        }
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim() {
            return Err(Error::data(format!(
                "feature dimension {} does not match the trained dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match self {
            FittedModel::Knn(m) => m.predict(x),
            FittedModel::Nb(m) => m.predict(x),
            FittedModel::Svm(m) => m.predict(x),
            FittedModel::Rf(m) => m.predict(x),
            FittedModel::Xgb(m) => m.predict(x),
        })
    }

    pub fn predict(&self, features: &LabeledFeatures) -> Result<Vec<Prediction>> {
        features.rows.iter().map(|r| self.predict_one(&r.values)).collect()
    }
}
