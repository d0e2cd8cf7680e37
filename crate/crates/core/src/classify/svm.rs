//! Soft-margin SVM trained by SMO with maximal-violating-pair selection.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::error::{Error, Result};
use crate::signal::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvmKernel {
    Linear,
    Rbf,
}

impl std::str::FromStr for SvmKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(SvmKernel::Linear),
            "rbf" => Ok(SvmKernel::Rbf),
            other => Err(Error::param(format!("unknown svm kernel `{other}`"))),
        }
    }
}

fn kernel(kind: SvmKernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        SvmKernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        SvmKernel::Rbf => (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: SvmKernel,
    pub c: f64,
    pub gamma: f64,
    pub bias: f64,
    /// Support vectors with their `alpha_i * y_i` coefficients.
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    /// Full dual solution over the training rows, `y = +1` for `Case`.
    pub alpha: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    dim: usize,
}

const TAU: f64 = 1e-12;

impl SvmModel {
    /// `tol` bounds the maximal KKT violation at exit; the solver gives up
    /// after `max_passes * n` pair updates.
    pub fn fit(
        x: &Array2<f64>,
        labels: &[Label],
        kind: SvmKernel,
        c: f64,
        gamma: f64,
        tol: f64,
        max_passes: usize,
    ) -> Result<Self> {
        let n = x.nrows();
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let y: Vec<f64> = labels.iter().map(|&l| if l == Label::Case { 1.0 } else { -1.0 }).collect();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = kernel(kind, gamma, &rows[i], &rows[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite kernel value"));
        }
        let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];

        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let max_iter = max_passes.saturating_mul(n).max(1000);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iter {
            // maximal violating pair
            let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
            let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
            for t in 0..n {
                let v = -y[t] * grad[t];
                let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
                let low = (y[t] < 0.0 && alpha[t] < c) || (y[t] > 0.0 && alpha[t] > 0.0);
                if up && v > gmax {
                    gmax = v;
                    i = t;
                }
                if low && v < gmin {
                    gmin = v;
                    j = t;
                }
            }
            if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
                converged = true;
                break;
            }
            iterations += 1;

            let (old_i, old_j) = (alpha[i], alpha[j]);
            if y[i] != y[j] {
                let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += q(i, t) * di + q(j, t) * dj;
            }
        }
        if !converged {
            log::warn!("SMO stopped after {iterations} updates without reaching tolerance {tol}");
        }

        // bias from free vectors, else the midpoint of the feasible interval
        let (mut sum, mut free) = (0.0, 0usize);
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..n {
            let yg = y[t] * grad[t];
            if alpha[t] > 0.0 && alpha[t] < c {
                sum += yg;
                free += 1;
            } else if (alpha[t] == 0.0 && y[t] > 0.0) || (alpha[t] == c && y[t] < 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
        let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
        let (support, coef): (Vec<Vec<f64>>, Vec<f64>) = (0..n)
            .filter(|&t| alpha[t] > 0.0)
            .map(|t| (rows[t].clone(), alpha[t] * y[t]))
            .unzip();
        Ok(Self { kernel: kind, c, gamma, bias: -rho, support, coef, alpha, y, iterations, converged, dim: x.ncols() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * kernel(self.kernel, self.gamma, sv, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let score = self.decision(x);
        Prediction { label: if score >= 0.0 { Label::Case } else { Label::Control }, score }
    }

    /// Largest KKT violation over the training rows.
    pub fn kkt_residual(&self, x: &Array2<f64>) -> f64 {
        let tol = 1e-12 * self.c.max(1.0);
        x.rows()
            .into_iter()
            .enumerate()
            .map(|(t, row)| {
                let margin = self.y[t] * self.decision(row.as_slice().expect("contiguous row"));
                let a = self.alpha[t];
                if a <= tol {
                    (1.0 - margin).max(0.0)
                } else if a >= self.c - tol {
                    (margin - 1.0).max(0.0)
                } else {
                    (margin - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// `|sum_i alpha_i y_i|`.
    pub fn equality_residual(&self) -> f64 {
        self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum::<f64>().abs()
    }
}
