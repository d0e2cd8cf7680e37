use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::signal::Label;

const VAR_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes with priors from training frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    /// Per class (`Case`, `Control`): log prior, feature means, feature variances.
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

fn class_index(l: Label) -> usize {
    match l {
        Label::Case => 0,
        Label::Control => 1,
    }
}

impl GaussianNb {
    pub fn fit(x: &Array2<f64>, labels: &[Label]) -> Self {
        let d = x.ncols();
        let mut count = [0usize; 2];
        let mut mean = [vec![0.0; d], vec![0.0; d]];
        let mut var = [vec![0.0; d], vec![0.0; d]];
        for (row, &l) in x.rows().into_iter().zip(labels) {
            let c = class_index(l);
            count[c] += 1;
            for (m, v) in mean[c].iter_mut().zip(row) {
                *m += v;
            }
        }
        for c in 0..2 {
            mean[c].iter_mut().for_each(|m| *m /= count[c].max(1) as f64);
        }
        for (row, &l) in x.rows().into_iter().zip(labels) {
            let c = class_index(l);
            for j in 0..d {
                let diff = row[j] - mean[c][j];
                var[c][j] += diff * diff;
            }
        }
        for c in 0..2 {
            var[c].iter_mut().for_each(|v| *v = (*v / count[c].max(1) as f64).max(VAR_FLOOR));
        }
        let n = labels.len() as f64;
        let log_prior = [(count[0] as f64 / n).ln(), (count[1] as f64 / n).ln()];
        Self { log_prior, mean, var }
    }

    pub fn dim(&self) -> usize {
        self.mean[0].len()
    }

    pub fn log_joint(&self, x: &[f64]) -> [f64; 2] {
        let mut out = self.log_prior;
        for (c, slot) in out.iter_mut().enumerate() {
            for j in 0..x.len() {
                let v = self.var[c][j];
                let diff = x[j] - self.mean[c][j];
                *slot += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - diff * diff / (2.0 * v);
            }
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let [case, control] = self.log_joint(x);
        let label = if case >= control { Label::Case } else { Label::Control };
        let score = 1.0 / (1.0 + (control - case).exp());
        Prediction { label, score }
    }
}
