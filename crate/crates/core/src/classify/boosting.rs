use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{BinnedMatrix, Tree, TreeParams, MAX_BINS};
use super::{positive, Prediction};
use crate::signal::Label;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn log_loss(y: &[f64], logits: &[f64]) -> f64 {
    let total: f64 = y
        .iter()
        .zip(logits)
        .map(|(&t, &z)| {
            // log(1 + e^z) - t z, computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - t * z
        })
        .sum();
    total / y.len() as f64
}

/// Gradient boosting of depth-limited regression trees on the logistic loss.
/// Each round fits the residuals `y - p` and is added with shrinkage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Mean training log-loss before boosting and after every round.
    #[serde(skip)]
    pub train_loss: Vec<f64>,
    dim: usize,
}

impl GradientBoosting {
    pub fn fit(x: &Array2<f64>, labels: &[Label], max_depth: usize, learning_rate: f64, n_estimators: usize) -> Self {
        let n = x.nrows();
        let data = BinnedMatrix::new(x, MAX_BINS);
        let y: Vec<f64> = labels.iter().map(|&l| positive(l)).collect();
        let prior = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
        let base_score = (prior / (1.0 - prior)).ln();
        let params = TreeParams { max_depth: Some(max_depth), ..TreeParams::default() };
        // no feature subsampling, so the stream is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut logits = vec![base_score; n];
        let mut train_loss = vec![log_loss(&y, &logits)];
        let mut trees = Vec::with_capacity(n_estimators);
        let weights = vec![1.0; n];
        for _ in 0..n_estimators {
            let residual: Vec<f64> = y.iter().zip(&logits).map(|(t, z)| t - sigmoid(*z)).collect();
            let tree = Tree::grow(&data, &residual, &weights, &params, &mut rng);
            for (z, row) in logits.iter_mut().zip(&rows) {
                *z += learning_rate * tree.predict(row);
            }
            train_loss.push(log_loss(&y, &logits));
            trees.push(tree);
        }
        Self { base_score, learning_rate, trees, train_loss, dim: x.ncols() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| self.learning_rate * t.predict(x)).sum::<f64>()
    }

    /// Logit after 0, 1, ..., `n_estimators` rounds.
    pub fn staged_decision(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trees.len() + 1);
        let mut z = self.base_score;
        out.push(z);
        for t in &self.trees {
            z += self.learning_rate * t.predict(x);
            out.push(z);
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let p = sigmoid(self.decision(x));
        Prediction { label: if p >= 0.5 { Label::Case } else { Label::Control }, score: p }
    }
}
