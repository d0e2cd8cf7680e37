use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::network::{backward, forward, DropoutMasks, Params};
use super::{contrastive_loss, contrastive_loss_grad, cosine_distance_grad, euclidean_distance_grad};
use super::{DistanceKind, SiameseModel};
use crate::error::{Error, Result};
use crate::pairing::{batch_iter, PairBatch, PairExample};
use crate::seed::derive_seed;
use crate::spectral::ImageStore;

/// Pairs per reduction chunk. Fixed so the summation order, and therefore
/// the result, does not depend on the worker count.
const CHUNK: usize = 8;

/// Dropout masks for the two twin passes of one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMasks {
    pub a: DropoutMasks,
    pub b: DropoutMasks,
}

pub fn sample_batch_masks(model: &mut SiameseModel, n_pairs: usize) -> Vec<PairMasks> {
    let shapes = *model.shapes();
    let p = model.config().dropout_p;
    let rng = model.dropout_rng();
    (0..n_pairs)
        .map(|_| {
            let a = DropoutMasks::sample(&shapes, p, rng);
            let b = DropoutMasks::sample(&shapes, p, rng);
            PairMasks { a, b }
        })
        .collect()
}

fn image_slice<'a>(store: &'a ImageStore, subject: usize, channel: usize, model: &SiameseModel) -> Result<&'a [f64]> {
    let img = store.get(subject, channel);
    if img.magnitudes.dim() != model.input_shape() {
        return Err(Error::data(format!(
            "image of subject {} channel {channel} is {:?}, model expects {:?}",
            img.subject_id,
            img.magnitudes.dim(),
            model.input_shape()
        )));
    }
    img.magnitudes.as_slice().ok_or_else(|| Error::data("spectral image is not in standard layout"))
}

/// Contrastive loss of one pair; accumulates its gradient when `grads` is given.
fn pair_term(
    model: &SiameseModel,
    store: &ImageStore,
    pair: &PairExample,
    masks: Option<&PairMasks>,
    grads: Option<&mut Params>,
) -> Result<f64> {
    let xa = image_slice(store, pair.subject_a, pair.channel, model)?;
    let xb = image_slice(store, pair.subject_b, pair.channel, model)?;
    let (p, s) = (&model.params, model.shapes());
    let ta = forward(p, s, xa, masks.map(|m| &m.a));
    let tb = forward(p, s, xb, masks.map(|m| &m.b));
    if ta.output.iter().chain(&tb.output).any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite activation in base network (diverged)"));
    }
    let (d, ga, gb) = match model.config().distance {
        DistanceKind::Cosine => cosine_distance_grad(&ta.output, &tb.output)?,
        DistanceKind::Euclidean => euclidean_distance_grad(&ta.output, &tb.output)?,
    };
    let margin = model.config().margin;
    let loss = contrastive_loss(pair.y, d, margin);
    if let Some(g) = grads {
        let dl_dd = contrastive_loss_grad(pair.y, d, margin);
        let ga: Vec<f64> = ga.iter().map(|v| v * dl_dd).collect();
        let gb: Vec<f64> = gb.iter().map(|v| v * dl_dd).collect();
        backward(p, s, xa, &ta, masks.map(|m| &m.a), &ga, g);
        backward(p, s, xb, &tb, masks.map(|m| &m.b), &gb, g);
    }
    Ok(loss)
}

fn check_masks(batch: &PairBatch, masks: Option<&[PairMasks]>) -> Result<()> {
    match masks {
        Some(m) if m.len() != batch.len() => Err(Error::param(format!(
            "{} dropout mask pairs for a batch of {} pairs",
            m.len(),
            batch.len()
        ))),
        _ => Ok(()),
    }
}

/// Mean contrastive loss over the batch plus `l1_lambda * sum |kernel weights|`.
/// `masks = None` evaluates in eval mode.
pub fn batch_loss(
    model: &SiameseModel,
    store: &ImageStore,
    batch: &PairBatch,
    masks: Option<&[PairMasks]>,
) -> Result<f64> {
    check_masks(batch, masks)?;
    if batch.is_empty() {
        return Err(Error::data("empty batch"));
    }
    let terms = batch
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| pair_term(model, store, pair, masks.map(|m| &m[i]), None))
        .collect::<Result<Vec<f64>>>()?;
    let mean = terms.iter().sum::<f64>() / batch.len() as f64;
    Ok(mean + model.config().l1_lambda * model.params.l1_kernels())
}

/// Batch loss and its gradient with respect to every parameter tensor.
pub fn gradient(
    model: &SiameseModel,
    store: &ImageStore,
    batch: &PairBatch,
    masks: Option<&[PairMasks]>,
) -> Result<(f64, Params)> {
    check_masks(batch, masks)?;
    if batch.is_empty() {
        return Err(Error::data("empty batch"));
    }
    let partials = batch
        .pairs
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut g = Params::zeros(model.shapes());
            let mut loss = 0.0;
            for (j, pair) in chunk.iter().enumerate() {
                let m = masks.map(|m| &m[ci * CHUNK + j]);
                loss += pair_term(model, store, pair, m, Some(&mut g))?;
            }
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grads = Params::zeros(model.shapes());
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        grads.add_assign(g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    let lambda = model.config().l1_lambda;
    if lambda != 0.0 {
        for ((g, w), is_kernel) in grads.tensors_mut().into_iter().zip(model.params.tensors()).zip(Params::IS_KERNEL) {
            if !is_kernel {
                continue;
            }
            for (gi, wi) in g.iter_mut().zip(w) {
                if *wi > 0.0 {
                    *gi += lambda;
                } else if *wi < 0.0 {
                    *gi -= lambda;
                }
            }
        }
    }
    Ok((loss / n + lambda * model.params.l1_kernels(), grads))
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(like: &Params, learning_rate: f64) -> Self {
        let mut zeros = like.clone();
        zeros.scale(0.0);
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
        let moments = self.m.tensors_mut().into_iter().zip(self.v.tensors_mut());
        for ((w, g), (m, v)) in tensors.zip(moments) {
            for i in 0..w.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let step = (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                w[i] -= self.learning_rate * step;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: SiameseModel,
    /// Mean training batch loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Runs `epochs` passes of channel-grouped batches with Adam updates.
pub fn train(mut model: SiameseModel, store: &ImageStore, pairs: &[PairExample]) -> Result<TrainedModel> {
    if pairs.is_empty() {
        return Err(Error::data("cannot train on an empty pair set"));
    }
    let cfg = model.config().clone();
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let shuffle = derive_seed(cfg.seed, "snn-epoch", epoch as u64);
        let batches = batch_iter(pairs, store.n_channels(), cfg.subject_pairs_per_batch, shuffle)?;
        let mut total = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let masks = sample_batch_masks(&mut model, batch.len());
            let diverged = |e: Error| Error::numerical(format!("epoch {epoch}, batch {bi}: {e}"));
            let (loss, grads) = gradient(&model, store, batch, Some(&masks)).map_err(|e| match e {
                Error::Numerical(_) => diverged(e),
                other => other,
            })?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::numerical(format!("non-finite loss at epoch {epoch}, batch {bi}")));
            }
            adam.step(&mut model.params, &grads);
            total += loss;
        }
        let mean = total / batches.len() as f64;
        log::info!("snn epoch {}/{}: mean loss {mean:.6}", epoch + 1, cfg.epochs);
        loss_trace.push(mean);
    }
    Ok(TrainedModel { model, loss_trace })
}

pub fn write_loss_trace(trace: &[f64], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(w, "epoch,mean_loss").map_err(io_err)?;
    for (e, l) in trace.iter().enumerate() {
        writeln!(w, "{},{l:?}", e + 1).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
