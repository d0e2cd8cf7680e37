use rayon::prelude::*;

use super::{FeatureVector, SiameseModel};
use crate::classify::{FeatureRow, LabeledFeatures};
use crate::error::{Error, Result};
use crate::pairing::PairExample;
use crate::spectral::ImageStore;

fn embed_all(model: &SiameseModel, store: &ImageStore) -> Result<Vec<FeatureVector>> {
    store.images().par_iter().map(|img| model.embed(img)).collect()
}

/// Eval-mode base-network output for every `(subject, channel)` in the store.
pub fn extract_features(model: &SiameseModel, store: &ImageStore) -> Result<LabeledFeatures> {
    let feats = embed_all(model, store)?;
    let c = store.n_channels();
    let rows = feats
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let subject = &store.subjects()[i / c];
            FeatureRow {
                subject_id: subject.subject_id.clone(),
                channel: i % c,
                label: subject.label,
                values: f.0,
            }
        })
        .collect();
    LabeledFeatures::new(rows)
}

/// Eval-mode twin distance of every pair.
pub fn pair_distances(model: &SiameseModel, store: &ImageStore, pairs: &[PairExample]) -> Result<Vec<f64>> {
    let feats = embed_all(model, store)?;
    let c = store.n_channels();
    pairs
        .iter()
        .map(|p| {
            let fa = &feats[p.subject_a * c + p.channel];
            let fb = &feats[p.subject_b * c + p.channel];
            model.distance_between(&fa.0, &fb.0)
        })
        .collect()
}

/// Fraction of pairs where `(d < threshold) == neighbour`.
pub fn thresholded_accuracy(distances: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::data("pair accuracy of an empty pair set"));
    }
    if distances.len() != labels.len() {
        return Err(Error::param("distance and label counts differ"));
    }
    let hits = distances.iter().zip(labels).filter(|(d, y)| (**d < threshold) == (**y == 1)).count();
    Ok(hits as f64 / distances.len() as f64)
}

pub fn pair_accuracy(model: &SiameseModel, store: &ImageStore, pairs: &[PairExample], threshold: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::data("pair accuracy of an empty pair set"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let d = pair_distances(model, store, pairs)?;
    let y: Vec<u8> = pairs.iter().map(|p| p.y).collect();
    thresholded_accuracy(&d, &y, threshold)
}
