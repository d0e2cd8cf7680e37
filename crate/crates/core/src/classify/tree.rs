//! Histogram CART on pre-binned features.
//!
//! Splits maximise the weighted squared-error reduction. For 0/1 targets the
//! weighted Gini impurity equals twice the weighted variance, so the same
//! criterion yields Gini splits for classification trees.

use ndarray::Array2;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MAX_BINS: usize = 256;

/// Feature-major bin codes. A feature with at most `max_bins` distinct values
/// gets one cut between each consecutive pair, which makes the search exact.
#[derive(Clone, Debug)]
pub struct BinnedMatrix {
    n: usize,
    cuts: Vec<Vec<f64>>,
    codes: Vec<u16>,
}

fn feature_cuts(values: &mut [f64], max_bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = values.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(max_bins);
    for b in 1..max_bins {
        let v = values[b * n / max_bins];
        let pos = distinct.partition_point(|&x| x <= v);
        if pos < distinct.len() {
            let cut = 0.5 * (v + distinct[pos]);
            if cuts.last().is_none_or(|&c| cut > c) {
                cuts.push(cut);
            }
        }
    }
    cuts
}

impl BinnedMatrix {
    pub fn new(x: &Array2<f64>, max_bins: usize) -> Self {
        let (n, d) = x.dim();
        let mut cuts = Vec::with_capacity(d);
        let mut codes = Vec::with_capacity(n * d);
        for f in 0..d {
            let col: Vec<f64> = x.column(f).to_vec();
            let c = feature_cuts(&mut col.clone(), max_bins);
            codes.extend(col.iter().map(|&v| c.partition_point(|&cut| cut < v) as u16));
            cuts.push(c);
        }
        Self { n, cuts, codes }
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    fn code(&self, feature: usize, row: usize) -> usize {
        self.codes[feature * self.n + row] as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features drawn per split; `None` searches all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_samples_split: 2, max_features: None }
    }
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    idx = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Fits leaves to the weighted mean of `target`; rows with zero weight are ignored.
    pub fn grow(
        data: &BinnedMatrix,
        target: &[f64],
        weights: &[f64],
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let samples: Vec<usize> = (0..data.n).filter(|&i| weights[i] > 0.0).collect();
        let mut builder = Builder { data, target, weights, params, rng, nodes: Vec::new() };
        builder.build(samples, 0);
        Tree { nodes: builder.nodes }
    }
}

struct Builder<'a> {
    data: &'a BinnedMatrix,
    target: &'a [f64],
    weights: &'a [f64],
    params: &'a TreeParams,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Best {
    gain: f64,
    feature: usize,
    bin: usize,
}

impl Builder<'_> {
    fn build(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let (w, s, ss) = samples.iter().fold((0.0, 0.0, 0.0), |(w, s, ss), &i| {
            let (wi, yi) = (self.weights[i], self.target[i]);
            (w + wi, s + wi * yi, ss + wi * yi * yi)
        });
        let value = if w > 0.0 { s / w } else { 0.0 };
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value });

        let sse = ss - s * s / w.max(f64::MIN_POSITIVE);
        let depth_reached = self.params.max_depth.is_some_and(|m| depth >= m);
        if depth_reached || samples.len() < self.params.min_samples_split || sse <= 1e-12 * w.max(1.0) {
            return idx;
        }
        let Some(best) = self.best_split(&samples, w, s) else {
            return idx;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.into_iter().partition(|&i| self.data.code(best.feature, i) <= best.bin);
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: best.feature,
            threshold: self.data.cuts[best.feature][best.bin],
            left: l,
            right: r,
        };
        idx
    }

    fn best_split(&mut self, samples: &[usize], w: f64, s: f64) -> Option<Best> {
        let d = self.data.n_features();
        let features: Vec<usize> = match self.params.max_features {
            Some(m) if m < d => {
                let mut f = sample(self.rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let base = s * s / w;
        let mut best: Option<Best> = None;
        for f in features {
            let bins = self.data.cuts[f].len() + 1;
            if bins < 2 {
                continue;
            }
            let mut hw = vec![0.0; bins];
            let mut hs = vec![0.0; bins];
            for &i in samples {
                let b = self.data.code(f, i);
                hw[b] += self.weights[i];
                hs[b] += self.weights[i] * self.target[i];
            }
            let (mut wl, mut sl) = (0.0, 0.0);
            for b in 0..bins - 1 {
                wl += hw[b];
                sl += hs[b];
                let wr = w - wl;
                if hw[b] == 0.0 && b > 0 || wl <= 0.0 || wr <= 1e-12 {
                    continue;
                }
                let sr = s - sl;
                let gain = sl * sl / wl + sr * sr / wr - base;
                if gain > 1e-12 * w && best.as_ref().is_none_or(|bst| gain > bst.gain) {
                    best = Some(Best { gain, feature: f, bin: b });
                }
            }
        }
        best
    }
}
