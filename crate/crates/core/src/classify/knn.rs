use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::signal::Label;

/// Lazy k-nearest-neighbour learner over euclidean distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl KnnModel {
    /// Stores the training set verbatim.
    pub fn fit(x: Array2<f64>, labels: Vec<Label>, k: usize) -> Self {
        let rows = x.rows().into_iter().map(|r| r.to_vec()).collect();
        Self { k, rows, labels }
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Majority vote among the `k` nearest rows. Equal distances resolve to
    /// the lower row index; a split vote resolves to `Case`.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(dist.len());
        let cases = dist[..k].iter().filter(|(_, i)| self.labels[*i] == Label::Case).count();
        let label = if 2 * cases >= k { Label::Case } else { Label::Control };
        Prediction { label, score: cases as f64 / k as f64 }
    }
}
