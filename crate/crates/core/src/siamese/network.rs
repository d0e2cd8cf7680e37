//! Base network: conv -> ReLU -> [pool] -> dropout, twice, then a softmax head.
//!
//! Tensors are flat `Vec<f64>` in channel-major, row-major order. Backward
//! passes accumulate into a [`Params`]-shaped gradient buffer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NetConfig, Pooling};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shapes {
    pub input: (usize, usize),
    pub kernel: usize,
    pub filters1: usize,
    pub filters2: usize,
    pub output_dim: usize,
    pub conv1: (usize, usize),
    pub pool1: (usize, usize),
    pub conv2: (usize, usize),
    pub pool2: (usize, usize),
    pub flat: usize,
    pub pooled: bool,
}

impl Shapes {
    pub fn new(cfg: &NetConfig, input: (usize, usize)) -> Result<Self> {
        let k = cfg.kernel_size;
        let pooled = cfg.pooling == Pooling::Max2x2;
        let valid = |(h, w): (usize, usize), stage: &str| -> Result<(usize, usize)> {
            if h < k || w < k {
                return Err(Error::param(format!(
                    "kernel {k} does not fit the {h}x{w} input of {stage}"
                )));
            }
            Ok((h - k + 1, w - k + 1))
        };
        let pool = |(h, w): (usize, usize), stage: &str| -> Result<(usize, usize)> {
            if !pooled {
                return Ok((h, w));
            }
            if h < 2 || w < 2 {
                return Err(Error::param(format!("{h}x{w} map after {stage} is too small to pool")));
            }
            Ok((h / 2, w / 2))
        };
        let conv1 = valid(input, "conv1")?;
        let pool1 = pool(conv1, "conv1")?;
        let conv2 = valid(pool1, "conv2")?;
        let pool2 = pool(conv2, "conv2")?;
        Ok(Self {
            input,
            kernel: k,
            filters1: cfg.conv1_filters,
            filters2: cfg.conv2_filters,
            output_dim: cfg.output_dim,
            conv1,
            pool1,
            conv2,
            pool2,
            flat: cfg.conv2_filters * pool2.0 * pool2.1,
            pooled,
        })
    }

    fn layer1_len(&self) -> usize {
        self.filters1 * self.pool1.0 * self.pool1.1
    }

    fn layer2_len(&self) -> usize {
        self.flat
    }
}

/// All trainable tensors. Gradients share this layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
}

impl Params {
    pub const NAMES: [&'static str; 6] = ["conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b"];
    /// Tensors carrying the L1 penalty (kernels, not biases).
    pub const IS_KERNEL: [bool; 6] = [true, false, true, false, true, false];

    pub fn zeros(s: &Shapes) -> Self {
        let k2 = s.kernel * s.kernel;
        Self {
            conv1_w: vec![0.0; s.filters1 * k2],
            conv1_b: vec![0.0; s.filters1],
            conv2_w: vec![0.0; s.filters2 * s.filters1 * k2],
            conv2_b: vec![0.0; s.filters2],
            fc_w: vec![0.0; s.output_dim * s.flat],
            fc_b: vec![0.0; s.output_dim],
        }
    }

    /// He-uniform convolution kernels, Glorot-uniform head, zero biases.
    pub fn init(s: &Shapes, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(s);
        let k2 = (s.kernel * s.kernel) as f64;
        let fill = |v: &mut Vec<f64>, bound: f64, rng: &mut ChaCha8Rng| {
            for x in v.iter_mut() {
                *x = rng.gen_range(-bound..bound);
            }
        };
        fill(&mut p.conv1_w, (6.0 / k2).sqrt(), rng);
        fill(&mut p.conv2_w, (6.0 / (k2 * s.filters1 as f64)).sqrt(), rng);
        fill(&mut p.fc_w, (6.0 / (s.flat + s.output_dim) as f64).sqrt(), rng);
        p
    }

    pub fn tensors(&self) -> [&Vec<f64>; 6] {
        [&self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b, &self.fc_w, &self.fc_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_layout(&self, other: &Params) -> bool {
        self.tensors().iter().zip(other.tensors()).all(|(a, b)| a.len() == b.len())
    }

    pub fn l1_kernels(&self) -> f64 {
        self.tensors()
            .iter()
            .zip(Self::IS_KERNEL)
            .filter(|(_, k)| *k)
            .map(|(t, _)| t.iter().map(|w| w.abs()).sum::<f64>())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// Inverted-dropout scale factors (0 or `1/(1-p)`) for one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks {
    pub layer1: Vec<f64>,
    pub layer2: Vec<f64>,
}

impl DropoutMasks {
    pub fn sample(s: &Shapes, p: f64, rng: &mut ChaCha8Rng) -> Self {
        let keep = 1.0 - p;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if p == 0.0 || rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        };
        let layer1 = draw(s.layer1_len());
        let layer2 = draw(s.layer2_len());
        Self { layer1, layer2 }
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    z1: Vec<f64>,
    arg1: Vec<usize>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    arg2: Vec<usize>,
    h2: Vec<f64>,
    pub output: Vec<f64>,
}

fn conv_forward(
    input: &[f64],
    (in_c, h, w): (usize, usize, usize),
    weights: &[f64],
    bias: &[f64],
    out_c: usize,
    k: usize,
) -> Vec<f64> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut out = vec![0.0; out_c * oh * ow];
    for oc in 0..out_c {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = bias[oc]);
        for ic in 0..in_c {
            for ki in 0..k {
                for kj in 0..k {
                    let wt = weights[((oc * in_c + ic) * k + ki) * k + kj];
                    for y in 0..oh {
                        let src = &input[(ic * h + y + ki) * w + kj..][..ow];
                        let dst = &mut plane[y * ow..(y + 1) * ow];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    (in_c, h, w): (usize, usize, usize),
    weights: &[f64],
    out_c: usize,
    k: usize,
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    mut grad_in: Option<&mut [f64]>,
) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    for oc in 0..out_c {
        let g = &grad_out[oc * oh * ow..(oc + 1) * oh * ow];
        grad_b[oc] += g.iter().sum::<f64>();
        for ic in 0..in_c {
            for ki in 0..k {
                for kj in 0..k {
                    let widx = ((oc * in_c + ic) * k + ki) * k + kj;
                    let wt = weights[widx];
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let g_row = &g[y * ow..(y + 1) * ow];
                        let base = (ic * h + y + ki) * w + kj;
                        let src = &input[base..base + ow];
                        acc += g_row.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(gi) = grad_in.as_deref_mut() {
                            for (d, gv) in gi[base..base + ow].iter_mut().zip(g_row) {
                                *d += wt * gv;
                            }
                        }
                    }
                    grad_w[widx] += acc;
                }
            }
        }
    }
}

/// 2x2 stride-2 max pooling; returns pooled map and flat argmax indices.
fn max_pool(input: &[f64], (c, h, w): (usize, usize, usize)) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut arg = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        for y in 0..ph {
            for x in 0..pw {
                let mut best = (ch * h + 2 * y) * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Forward pass for one `H x W` image (row-major). `masks` selects train mode.
pub fn forward(p: &Params, s: &Shapes, image: &[f64], masks: Option<&DropoutMasks>) -> Trace {
    let k = s.kernel;
    let z1 = conv_forward(image, (1, s.input.0, s.input.1), &p.conv1_w, &p.conv1_b, s.filters1, k);
    let mut a1 = z1.clone();
    relu_in_place(&mut a1);
    let (mut h1, arg1) = if s.pooled {
        max_pool(&a1, (s.filters1, s.conv1.0, s.conv1.1))
    } else {
        (a1, Vec::new())
    };
    if let Some(m) = masks {
        h1.iter_mut().zip(&m.layer1).for_each(|(x, s)| *x *= s);
    }

    let z2 = conv_forward(&h1, (s.filters1, s.pool1.0, s.pool1.1), &p.conv2_w, &p.conv2_b, s.filters2, k);
    let mut a2 = z2.clone();
    relu_in_place(&mut a2);
    let (mut h2, arg2) = if s.pooled {
        max_pool(&a2, (s.filters2, s.conv2.0, s.conv2.1))
    } else {
        (a2, Vec::new())
    };
    if let Some(m) = masks {
        h2.iter_mut().zip(&m.layer2).for_each(|(x, s)| *x *= s);
    }

    let logits: Vec<f64> = (0..s.output_dim)
        .map(|o| {
            let row = &p.fc_w[o * s.flat..(o + 1) * s.flat];
            p.fc_b[o] + row.iter().zip(&h2).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect();
    let output = softmax(&logits);
    Trace { z1, arg1, h1, z2, arg2, h2, output }
}

fn unpool(grad_pooled: &[f64], arg: &[usize], full_len: usize) -> Vec<f64> {
    let mut g = vec![0.0; full_len];
    for (&idx, &v) in arg.iter().zip(grad_pooled) {
        g[idx] += v;
    }
    g
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
pub fn backward(
    p: &Params,
    s: &Shapes,
    image: &[f64],
    trace: &Trace,
    masks: Option<&DropoutMasks>,
    grad_output: &[f64],
    grads: &mut Params,
) {
    let f = &trace.output;
    let dot: f64 = f.iter().zip(grad_output).map(|(a, b)| a * b).sum();
    let g_logits: Vec<f64> = f.iter().zip(grad_output).map(|(fi, gi)| fi * (gi - dot)).collect();

    let mut g_h2 = vec![0.0; s.flat];
    for (o, &go) in g_logits.iter().enumerate() {
        grads.fc_b[o] += go;
        let w_row = &p.fc_w[o * s.flat..(o + 1) * s.flat];
        let gw_row = &mut grads.fc_w[o * s.flat..(o + 1) * s.flat];
        for i in 0..s.flat {
            gw_row[i] += go * trace.h2[i];
            g_h2[i] += go * w_row[i];
        }
    }
    if let Some(m) = masks {
        g_h2.iter_mut().zip(&m.layer2).for_each(|(g, s)| *g *= s);
    }
    let mut g_z2 = if s.pooled {
        unpool(&g_h2, &trace.arg2, trace.z2.len())
    } else {
        g_h2
    };
    g_z2.iter_mut().zip(&trace.z2).for_each(|(g, &z)| {
        if z <= 0.0 {
            *g = 0.0
        }
    });

    let mut g_h1 = vec![0.0; trace.h1.len()];
    conv_backward(
        &trace.h1,
        (s.filters1, s.pool1.0, s.pool1.1),
        &p.conv2_w,
        s.filters2,
        s.kernel,
        &g_z2,
        &mut grads.conv2_w,
        &mut grads.conv2_b,
        Some(&mut g_h1),
    );
    if let Some(m) = masks {
        g_h1.iter_mut().zip(&m.layer1).for_each(|(g, s)| *g *= s);
    }
    let mut g_z1 = if s.pooled {
        unpool(&g_h1, &trace.arg1, trace.z1.len())
    } else {
        g_h1
    };
    g_z1.iter_mut().zip(&trace.z1).for_each(|(g, &z)| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
    conv_backward(
        image,
        (1, s.input.0, s.input.1),
        &p.conv1_w,
        s.filters1,
        s.kernel,
        &g_z1,
        &mut grads.conv1_w,
        &mut grads.conv1_b,
        None,
    );
}
