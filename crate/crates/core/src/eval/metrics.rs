use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::ClassifierSpec;
use crate::error::{Error, Result};
use crate::signal::Label;

/// Channel-instance confusion counts with `Case` as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Confusion {
    pub fn new(tp: usize, fn_: usize, tn: usize, fp: usize) -> Self {
        Self { tp, fn_, tn, fp }
    }

    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Case, Label::Case) => self.tp += 1,
            (Label::Case, Label::Control) => self.fn_ += 1,
            (Label::Control, Label::Control) => self.tn += 1,
            (Label::Control, Label::Case) => self.fp += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn merge(&self, other: &Confusion) -> Confusion {
        Confusion::new(self.tp + other.tp, self.fn_ + other.fn_, self.tn + other.tn, self.fp + other.fp)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

/// Mean and population standard deviation over the folds where a metric is
/// defined. `mean` and `std` are `None` when no fold defines it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub defined_folds: usize,
    pub undefined_folds: usize,
}

impl MeanStd {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let undefined_folds = values.len() - defined.len();
        if defined.is_empty() {
            return Self { mean: None, std: None, defined_folds: 0, undefined_folds };
        }
        let n = defined.len() as f64;
        let mean = defined.iter().sum::<f64>() / n;
        let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean: Some(mean), std: Some(var.sqrt()), defined_folds: defined.len(), undefined_folds }
    }

    fn cell(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.2} ± {s:.2}"),
            _ => "undefined".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: MeanStd,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
}

impl MetricSummary {
    /// Per-fold metrics averaged over folds. Cells with a zero denominator
    /// are left out of the mean and reported with a warning.
    pub fn from_confusions(folds: &[Confusion]) -> Self {
        let collect = |f: fn(&Confusion) -> Option<f64>| folds.iter().map(f).collect::<Vec<_>>();
        let summary = Self {
            accuracy: MeanStd::from_values(&collect(Confusion::accuracy)),
            sensitivity: MeanStd::from_values(&collect(Confusion::sensitivity)),
            specificity: MeanStd::from_values(&collect(Confusion::specificity)),
        };
        for (name, m) in [("accuracy", &summary.accuracy), ("sensitivity", &summary.sensitivity), ("specificity", &summary.specificity)] {
            if m.undefined_folds > 0 {
                log::warn!("{name} undefined in {} of {} folds; excluded from the mean", m.undefined_folds, folds.len());
            }
        }
        summary
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out_subject: String,
    pub label: Label,
    pub channel_predictions: Vec<Label>,
    /// Majority vote over channels; an even split goes to `Case`.
    pub subject_prediction: Label,
    pub vote_tie: bool,
    pub confusion: Confusion,
    /// Classifier actually fitted in this fold, after any tuning.
    pub classifier: Option<ClassifierSpec>,
}

impl FoldResult {
    pub fn new(held_out_subject: String, label: Label, channel_predictions: Vec<Label>, classifier: Option<ClassifierSpec>) -> Self {
        let mut confusion = Confusion::default();
        for &p in &channel_predictions {
            confusion.record(label, p);
        }
        let case_votes = channel_predictions.iter().filter(|&&p| p == Label::Case).count();
        let n = channel_predictions.len();
        let subject_prediction = if 2 * case_votes >= n { Label::Case } else { Label::Control };
        Self {
            held_out_subject,
            label,
            channel_predictions,
            subject_prediction,
            vote_tie: 2 * case_votes == n,
            confusion,
            classifier,
        }
    }
}

/// Subject-level metrics from the per-fold majority votes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectLevel {
    pub confusion: Confusion,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub vote_ties: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pipeline: String,
    pub channel: MetricSummary,
    /// Channel counts pooled over all folds.
    pub pooled: Confusion,
    pub subject_level: SubjectLevel,
    pub folds: Vec<FoldResult>,
}

pub fn compute_metrics(pipeline: &str, folds: Vec<FoldResult>) -> MetricsReport {
    let confusions: Vec<Confusion> = folds.iter().map(|f| f.confusion).collect();
    let pooled = confusions.iter().fold(Confusion::default(), |a, c| a.merge(c));
    let mut subject = Confusion::default();
    for f in &folds {
        subject.record(f.label, f.subject_prediction);
    }
    MetricsReport {
        pipeline: pipeline.to_string(),
        channel: MetricSummary::from_confusions(&confusions),
        pooled,
        subject_level: SubjectLevel {
            confusion: subject,
            accuracy: subject.accuracy(),
            sensitivity: subject.sensitivity(),
            specificity: subject.specificity(),
            vote_ties: folds.iter().filter(|f| f.vote_tie).count(),
        },
        folds,
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.2}"))
}

/// Aligned text table: one row per pipeline, channel-level mean ± std,
/// followed by subject-level majority-vote figures.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let header = ["Pipeline", "Accuracy", "Sensitivity", "Specificity", "Subject acc", "Vote ties"];
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            [
                r.pipeline.clone(),
                r.channel.accuracy.cell(),
                r.channel.sensitivity.cell(),
                r.channel.specificity.cell(),
                opt_cell(r.subject_level.accuracy),
                r.subject_level.vote_ties.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}", w = *w)).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(rule.iter().map(String::as_str).collect(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

pub fn write_fold_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["held_out_subject", "label", "tp", "fn", "tn", "fp", "accuracy", "subject_prediction", "vote_tie"])
        .map_err(csv_err)?;
    for f in &report.folds {
        let c = f.confusion;
        w.write_record([
            f.held_out_subject.clone(),
            f.label.to_string(),
            c.tp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            c.fp.to_string(),
            c.accuracy().map_or_else(String::new, |a| a.to_string()),
            f.subject_prediction.to_string(),
            f.vote_tie.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
