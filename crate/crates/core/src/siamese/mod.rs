//! Weight-shared convolutional twins trained under a contrastive loss.
//!
//! The base network maps one normalised spectral image to a point on the
//! probability simplex (softmax head). Both twins run the same parameters;
//! their outputs meet in a distance (cosine by default) that feeds the
//! contrastive loss. Gradients from both inputs accumulate into the shared
//! weights, and training uses Adam with L1 on every kernel and inverted
//! dropout after each convolutional block.

mod checkpoint;
mod features;
mod loss;
mod network;
mod train;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::spectral::SpectralImage;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use features::{extract_features, pair_accuracy, pair_distances, thresholded_accuracy};
pub use loss::{
    contrastive_loss, contrastive_loss_grad, cosine_distance, cosine_distance_grad, euclidean_distance_grad,
};
pub use network::{backward, forward, softmax, DropoutMasks, Params, Shapes, Trace};
pub use train::{
    batch_loss, gradient, sample_batch_masks, train, write_loss_trace, Adam, PairMasks, TrainedModel,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    None,
    #[default]
    Max2x2,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Pooling::None),
            "max2x2" | "max" => Ok(Pooling::Max2x2),
            other => Err(Error::param(format!("unknown pooling `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    #[default]
    Cosine,
    Euclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Square kernel side, shared by both convolutional layers.
    pub kernel_size: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    /// Feature dimension `q` of the softmax head.
    pub output_dim: usize,
    pub l1_lambda: f64,
    pub margin: f64,
    pub learning_rate: f64,
    pub dropout_p: f64,
    pub epochs: usize,
    pub pooling: Pooling,
    pub distance: DistanceKind,
    pub subject_pairs_per_batch: usize,
    /// Pair-level decision threshold on the twin distance.
    pub pair_threshold: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            kernel_size: 3,
            conv1_filters: 8,
            conv2_filters: 16,
            output_dim: 4,
            l1_lambda: 1e-3,
            margin: 1.0,
            learning_rate: 1e-3,
            dropout_p: 0.5,
            epochs: 20,
            pooling: Pooling::Max2x2,
            distance: DistanceKind::Cosine,
            subject_pairs_per_batch: 16,
            pair_threshold: 0.5,
            seed: 0,
        }
    }
}

impl NetConfig {
    /// Admissibility checks. Search domains for tuning live in the tuning space.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::param(msg));
        if self.kernel_size == 0 {
            return fail("kernel size must be positive".into());
        }
        if self.conv1_filters == 0 || self.conv2_filters == 0 {
            return fail("filter counts must be positive".into());
        }
        if self.output_dim < 2 {
            return fail(format!("output dimension must be >= 2, got {}", self.output_dim));
        }
        if !(self.l1_lambda >= 0.0) || !(self.learning_rate >= 0.0) {
            return fail("l1_lambda and learning_rate must be non-negative".into());
        }
        if !(self.margin > 0.0) {
            return fail(format!("margin must be positive, got {}", self.margin));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(format!("dropout probability must be in [0, 1), got {}", self.dropout_p));
        }
        if self.subject_pairs_per_batch == 0 {
            return fail("subject pairs per batch must be positive".into());
        }
        if !(self.pair_threshold > 0.0 && self.pair_threshold < 1.0) {
            return fail(format!("pair threshold must be in (0, 1), got {}", self.pair_threshold));
        }
        Ok(())
    }
}

/// A point on the probability simplex produced by the base network.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Twin network: one set of base-network parameters plus the dropout stream.
#[derive(Clone, Debug)]
pub struct SiameseModel {
    config: NetConfig,
    shapes: Shapes,
    pub params: Params,
    rng: ChaCha8Rng,
}

impl SiameseModel {
    /// Freshly initialised model for `(bins, frames)` input images.
    pub fn new(config: NetConfig, input_shape: (usize, usize)) -> Result<Self> {
        config.validate()?;
        let shapes = Shapes::new(&config, input_shape)?;
        let params = Params::init(&shapes, &mut rng_for(config.seed, "snn-init", 0));
        let rng = rng_for(config.seed, "snn-dropout", 0);
        Ok(Self { config, shapes, params, rng })
    }

    pub fn from_params(config: NetConfig, input_shape: (usize, usize), params: Params) -> Result<Self> {
        config.validate()?;
        let shapes = Shapes::new(&config, input_shape)?;
        if !Params::zeros(&shapes).same_layout(&params) {
            return Err(Error::data("parameter tensors do not match the configured architecture"));
        }
        if !params.all_finite() {
            return Err(Error::numerical("parameters contain non-finite values"));
        }
        let rng = rng_for(config.seed, "snn-dropout", 0);
        Ok(Self { config, shapes, params, rng })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn shapes(&self) -> &Shapes {
        &self.shapes
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.shapes.input
    }

    fn check_image<'a>(&self, image: &'a SpectralImage) -> Result<&'a [f64]> {
        if image.magnitudes.dim() != self.shapes.input {
            return Err(Error::data(format!(
                "image of subject {} channel {} is {:?}, model expects {:?}",
                image.subject_id,
                image.channel_index,
                image.magnitudes.dim(),
                self.shapes.input
            )));
        }
        image
            .magnitudes
            .as_slice()
            .ok_or_else(|| Error::data("spectral image is not in standard layout"))
    }

    fn finish(trace: Trace) -> Result<FeatureVector> {
        if trace.output.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite activation in base network (diverged)"));
        }
        Ok(FeatureVector(trace.output))
    }

    /// Deterministic eval-mode forward pass.
    pub fn embed(&self, image: &SpectralImage) -> Result<FeatureVector> {
        let x = self.check_image(image)?;
        Self::finish(forward(&self.params, &self.shapes, x, None))
    }

    /// Forward pass; train mode samples fresh dropout masks from the model stream.
    pub fn base_forward(&mut self, image: &SpectralImage, train_mode: bool) -> Result<FeatureVector> {
        if !train_mode {
            return self.embed(image);
        }
        let x = self.check_image(image)?;
        let masks = DropoutMasks::sample(&self.shapes, self.config.dropout_p, &mut self.rng);
        Self::finish(forward(&self.params, &self.shapes, x, Some(&masks)))
    }

    pub fn distance_between(&self, f1: &[f64], f2: &[f64]) -> Result<f64> {
        match self.config.distance {
            DistanceKind::Cosine => cosine_distance(f1, f2),
            DistanceKind::Euclidean => Ok(euclidean_distance_grad(f1, f2)?.0),
        }
    }

    /// Eval-mode twin distance between two images.
    pub fn distance(&self, a: &SpectralImage, b: &SpectralImage) -> Result<f64> {
        let fa = self.embed(a)?;
        let fb = self.embed(b)?;
        self.distance_between(&fa.0, &fb.0)
    }

    pub(crate) fn dropout_rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn image(h: usize, w: usize, fill: impl Fn(usize, usize) -> f64) -> SpectralImage {
        SpectralImage {
            subject_id: "s".into(),
            channel_index: 0,
            magnitudes: Array2::from_shape_fn((h, w), |(i, j)| fill(i, j)),
            freq_resolution_hz: 0.5,
            frame_times_s: vec![0.0; w],
        }
    }

    #[test]
    fn zero_network_gives_uniform_output() {
        let cfg = NetConfig { output_dim: 4, ..NetConfig::default() };
        let mut model = SiameseModel::new(cfg.clone(), (12, 12)).unwrap();
        model.params = Params::zeros(model.shapes());
        let f = model.embed(&image(12, 12, |_, _| 0.0)).unwrap();
        assert_eq!(f.0, vec![0.25; 4]);
    }

    #[test]
    fn eval_mode_is_deterministic_and_on_simplex() {
        let model = SiameseModel::new(NetConfig::default(), (20, 14)).unwrap();
        let img = image(20, 14, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let a = model.embed(&img).unwrap();
        let b = model.embed(&img).unwrap();
        assert_eq!(a, b);
        assert!((a.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn train_mode_draws_dropout() {
        let mut model = SiameseModel::new(NetConfig::default(), (20, 14)).unwrap();
        let img = image(20, 14, |i, j| ((i + j) % 5) as f64 / 4.0);
        let a = model.base_forward(&img, true).unwrap();
        let b = model.base_forward(&img, true).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn shape_errors() {
        assert!(SiameseModel::new(NetConfig::default(), (5, 5)).is_err());
        let model = SiameseModel::new(NetConfig::default(), (20, 14)).unwrap();
        assert!(model.embed(&image(19, 14, |_, _| 0.0)).is_err());
        let literal = NetConfig { pooling: Pooling::None, ..NetConfig::default() };
        let m = SiameseModel::new(literal, (129, 59)).unwrap();
        assert_eq!(m.shapes().flat, 16 * 125 * 55);
        let pooled = SiameseModel::new(NetConfig::default(), (129, 59)).unwrap();
        assert_eq!(pooled.shapes().flat, 16 * 30 * 13);
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig { output_dim: 1, ..NetConfig::default() }.validate().is_err());
        assert!(NetConfig { dropout_p: 1.0, ..NetConfig::default() }.validate().is_err());
        assert!(NetConfig { margin: 0.0, ..NetConfig::default() }.validate().is_err());
        assert!(NetConfig { pair_threshold: 1.0, ..NetConfig::default() }.validate().is_err());
        assert!(NetConfig { learning_rate: 0.0, l1_lambda: 0.0, ..NetConfig::default() }.validate().is_ok());
    }
}
