use ndarray::Array2;
use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{BinnedMatrix, Tree, TreeParams, MAX_BINS};
use super::{positive, Prediction};
use crate::seed::rng_for;
use crate::signal::Label;

/// Bagged Gini trees with `floor(sqrt(d))` features drawn per split.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    /// Bootstrap multiplicity of each training row, per tree.
    #[serde(skip)]
    pub in_bag: Vec<Vec<u32>>,
    dim: usize,
}

impl RandomForest {
    pub fn fit(x: &Array2<f64>, labels: &[Label], n_estimators: usize, seed: u64) -> Self {
        let (n, d) = x.dim();
        let data = BinnedMatrix::new(x, MAX_BINS);
        let target: Vec<f64> = labels.iter().map(|&l| positive(l)).collect();
        let params = TreeParams { max_features: Some(((d as f64).sqrt() as usize).max(1)), ..TreeParams::default() };
        let grown: Vec<(Tree, Vec<u32>)> = (0..n_estimators)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_for(seed, "rf-tree", t as u64);
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.gen_range(0..n)] += 1;
                }
                let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                (Tree::grow(&data, &target, &weights, &params, &mut rng), counts)
            })
            .collect();
        let (trees, in_bag) = grown.into_iter().unzip();
        Self { trees, in_bag, dim: d }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn tree_vote(tree: &Tree, x: &[f64]) -> bool {
        tree.predict(x) >= 0.5
    }

    /// Majority vote; an even split goes to `Case`.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let votes = self.trees.iter().filter(|t| Self::tree_vote(t, x)).count();
        let label = if 2 * votes >= self.trees.len() { Label::Case } else { Label::Control };
        Prediction { label, score: votes as f64 / self.trees.len() as f64 }
    }

    /// Out-of-bag accuracy over rows left out by at least one tree.
    pub fn oob_accuracy(&self, x: &Array2<f64>, labels: &[Label]) -> Option<f64> {
        let (mut hits, mut seen) = (0usize, 0usize);
        for (i, row) in x.rows().into_iter().enumerate() {
            let row = row.to_vec();
            let (mut votes, mut total) = (0usize, 0usize);
            for (tree, bag) in self.trees.iter().zip(&self.in_bag) {
                if bag[i] == 0 {
                    total += 1;
                    votes += usize::from(Self::tree_vote(tree, &row));
                }
            }
            if total > 0 {
                seen += 1;
                let label = if 2 * votes >= total { Label::Case } else { Label::Control };
                hits += usize::from(label == labels[i]);
            }
        }
        (seen > 0).then(|| hits as f64 / seen as f64)
    }
}
