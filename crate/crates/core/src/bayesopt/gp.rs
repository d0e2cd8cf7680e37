use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize_box, LbfgsOptions};
use crate::error::{Error, Result};
use crate::seed::rng_for;

const LENGTHSCALE_RANGE: (f64, f64) = (1e-2, 10.0);
const SIGNAL_RANGE: (f64, f64) = (5e-2, 20.0);
const NOISE_CEILING: f64 = 1.0;
const JITTERS: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-6, 1e-4];
const RANDOM_STARTS: usize = 4;

/// Kernel hyperparameters, expressed for standardised targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Fit jointly with the kernel, never below `floor`.
    Fit { floor: f64 },
    Fixed(f64),
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Fit { floor: 1e-6 }
    }
}

/// Matérn 5/2 with one lengthscale per input dimension.
fn matern52(a: &[f64], b: &[f64], hyper: &GpHyper) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&hyper.lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    let s = (5.0 * r2).sqrt();
    hyper.signal_variance * (1.0 + s + 5.0 * r2 / 3.0) * (-s).exp()
}

fn factor(x: &[Vec<f64>], hyper: &GpHyper) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| matern52(&x[i], &x[j], hyper) + if i == j { hyper.noise } else { 0.0 });
    JITTERS.iter().find_map(|&jit| {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jit;
        }
        kj.cholesky().map(|c| (c, jit))
    })
}

fn log_marginal_likelihood(x: &[Vec<f64>], y: &DVector<f64>, hyper: &GpHyper) -> Option<f64> {
    let (chol, _) = factor(x, hyper)?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let n = y.len() as f64;
    let v = -0.5 * y.dot(&alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    v.is_finite().then_some(v)
}

/// Posterior of a zero-mean GP over standardised observations.
#[derive(Clone, Debug)]
pub struct Gp {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    hyper: GpHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

fn standardize(values: &[f64]) -> (f64, f64, DVector<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (mean, scale, DVector::from_iterator(values.len(), values.iter().map(|v| (v - mean) / scale)))
}

fn check_inputs(points: &[Vec<f64>], values: &[f64]) -> Result<usize> {
    if points.is_empty() || points.len() != values.len() {
        return Err(Error::param(format!("gp needs matching non-empty inputs, got {} points and {} values", points.len(), values.len())));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::param("gp inputs must share a positive dimension"));
    }
    if points.iter().flatten().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::numerical("gp inputs contain non-finite values"));
    }
    Ok(d)
}

impl Gp {
    /// Fits kernel hyperparameters by multi-start maximisation of the log
    /// marginal likelihood, then conditions on the data.
    pub fn fit(points: &[Vec<f64>], values: &[f64], noise: NoiseModel, seed: u64) -> Result<Self> {
        let d = check_inputs(points, values)?;
        let (_, _, ys) = standardize(values);
        let fit_noise = matches!(noise, NoiseModel::Fit { .. });
        let (noise_lo, fixed_noise) = match noise {
            NoiseModel::Fit { floor } => (floor.max(1e-12), 0.0),
            NoiseModel::Fixed(v) => (v, v),
        };
        let mut lo = vec![LENGTHSCALE_RANGE.0.ln(); d];
        let mut hi = vec![LENGTHSCALE_RANGE.1.ln(); d];
        lo.push(SIGNAL_RANGE.0.ln());
        hi.push(SIGNAL_RANGE.1.ln());
        if fit_noise {
            lo.push(noise_lo.ln());
            hi.push(NOISE_CEILING.max(noise_lo).ln());
        }
        let decode = |theta: &[f64]| GpHyper {
            lengthscales: theta[..d].iter().map(|v| v.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise: if fit_noise { theta[d + 1].exp() } else { fixed_noise },
        };
        let objective = |theta: &[f64]| log_marginal_likelihood(points, &ys, &decode(theta)).map_or(f64::INFINITY, |v| -v);

        let mut starts = Vec::with_capacity(RANDOM_STARTS + 1);
        let mut first = vec![0.3f64.ln(); d];
        first.push(0.0);
        if fit_noise {
            first.push(1e-3f64.max(noise_lo).min(NOISE_CEILING).ln());
        }
        starts.push(first);
        let mut rng = rng_for(seed, "gp-start", 0);
        for _ in 0..RANDOM_STARTS {
            starts.push(lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect());
        }
        let opts = LbfgsOptions { max_iter: 60, ..LbfgsOptions::default() };
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in &starts {
            let (theta, val) = minimize_box(objective, s, &lo, &hi, &opts);
            if val.is_finite() && best.as_ref().is_none_or(|b| val < b.1) {
                best = Some((theta, val));
            }
        }
        let (theta, _) = best.ok_or_else(|| Error::numerical("gp likelihood is not finite at any start"))?;
        Self::with_hyper(points, values, decode(&theta))
    }

    /// Conditions on the data with fixed hyperparameters.
    pub fn with_hyper(points: &[Vec<f64>], values: &[f64], hyper: GpHyper) -> Result<Self> {
        let d = check_inputs(points, values)?;
        if hyper.lengthscales.len() != d {
            return Err(Error::param(format!("{} lengthscales for {d} input dimensions", hyper.lengthscales.len())));
        }
        let (y_mean, y_scale, ys) = standardize(values);
        let (chol, jitter) = factor(points, &hyper).ok_or_else(|| {
            Error::numerical(format!("gp covariance is not positive definite even with jitter {:e}", JITTERS[JITTERS.len() - 1]))
        })?;
        let alpha = chol.solve(&ys);
        Ok(Self { x: points.to_vec(), y_mean, y_scale, hyper, chol, alpha, jitter })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    /// Diagonal jitter that was needed for the factorisation.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Posterior mean and latent variance, in the units of the observations.
    pub fn predict(&self, query: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| matern52(xi, query, &self.hyper)));
        let mean = k.dot(&self.alpha);
        let var = match self.chol.l_dirty().solve_lower_triangular(&k) {
            Some(v) => (self.hyper.signal_variance - v.dot(&v)).max(0.0),
            None => 0.0,
        };
        (self.y_mean + self.y_scale * mean, var * self.y_scale * self.y_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = [0.05, 0.3, 0.5, 0.72, 0.95].iter().map(|&v| vec![v]).collect();
        let y = x.iter().map(|p| (6.0 * p[0]).sin()).collect();
        (x, y)
    }

    #[test]
    fn interpolates_with_tiny_noise() {
        let (x, y) = fixture();
        let gp = Gp::fit(&x, &y, NoiseModel::Fixed(1e-10), 3).unwrap();
        for (p, v) in x.iter().zip(&y) {
            let (m, var) = gp.predict(p);
            assert!((m - v).abs() < 1e-6, "{m} vs {v}");
            assert!(var <= 1e-10 + 1e-6);
        }
    }

    #[test]
    fn fitted_noise_respects_floor() {
        let (x, y) = fixture();
        let gp = Gp::fit(&x, &y, NoiseModel::default(), 0).unwrap();
        assert!(gp.hyper().noise >= 1e-6 * (1.0 - 1e-9));
    }

    #[test]
    fn constant_values_do_not_break_standardisation() {
        let x = vec![vec![0.1, 0.2], vec![0.8, 0.4]];
        let gp = Gp::fit(&x, &[0.5, 0.5], NoiseModel::default(), 0).unwrap();
        assert!((gp.predict(&[0.3, 0.3]).0 - 0.5).abs() < 1e-9);
    }
}
