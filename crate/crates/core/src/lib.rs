//! Siamese spectral-image feature learning for EEG case-control
//! classification.
//!
//! The pipeline turns each channel of each recording into a normalised
//! short-time magnitude image, trains a weight-shared convolutional network
//! on same-channel subject pairs under a cosine contrastive loss, and feeds
//! the resulting per-channel features to conventional classifiers evaluated
//! with leave-one-subject-out cross-validation. Every stage can be tuned
//! with Gaussian-process Bayesian optimisation.

pub mod error;
pub mod seed;
pub mod signal;
pub mod spectral;
pub mod pairing;
pub mod siamese;
pub mod classify;
pub mod bayesopt;
pub mod eval;
pub mod cli;

pub use error::{Error, Result};
pub use ndarray;
