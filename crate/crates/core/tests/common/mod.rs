//! Oracles shared by the integration suites and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;

use eegsiam::classify::{GaussianNb, KnnModel, SvmKernel, SvmModel};
use eegsiam::ndarray::Array2;
use eegsiam::pairing::{enumerate_pairs, PairBatch};
use eegsiam::siamese::{
    batch_loss, contrastive_loss, gradient, DistanceKind, DropoutMasks, NetConfig, PairMasks, Params, Pooling, Shapes, SiameseModel,
};
use eegsiam::signal::{Label, SubjectInfo};
use eegsiam::spectral::{dstft, ImageStore, SpectralImage, StftConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct O(N^2) DFT magnitudes of `x`.
pub fn direct_dft(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let phase = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += v * phase.cos();
                im += v * phase.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Config whose window is `win` samples and hop `hop` samples at `rate = win` Hz.
pub fn sample_config(win: usize, hop: usize) -> (StftConfig, f64) {
    let cfg = StftConfig { window_s: 1.0, hop_s: hop as f64 / win as f64, ..StftConfig::default() };
    (cfg, win as f64)
}

/// Worst errors of a random-signal sweep, each relative to its frame scale.
#[derive(Debug, Default)]
pub struct DftSweep {
    pub signals: usize,
    pub frames: usize,
    pub worst_bin: f64,
    pub worst_parseval: f64,
}

/// `count` random signals of length at most 512 against the direct DFT and
/// the one-sided Parseval identity.
pub fn dft_sweep(seed: u64, count: usize) -> DftSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DftSweep { signals: count, ..DftSweep::default() };
    for _ in 0..count {
        let len = rng.gen_range(16..=512);
        let win = rng.gen_range(2..=len.min(128));
        let hop = rng.gen_range(1..=win);
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let signal: Vec<f64> = (0..len).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let (cfg, rate) = sample_config(win, hop);
        let image = dstft(&signal, rate, &cfg).expect("valid geometry");
        assert_eq!(image.n_frames(), 1 + (len - win) / hop);
        assert_eq!(image.n_bins(), win / 2 + 1);
        for w in 0..image.n_frames() {
            out.frames += 1;
            let frame = &signal[w * hop..w * hop + win];
            let oracle = direct_dft(frame);
            let frame_scale = oracle.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            for f in 0..image.n_bins() {
                let err = (image.magnitudes[[f, w]] - oracle[f]).abs() / frame_scale;
                out.worst_bin = out.worst_bin.max(err);
            }
            let time_energy: f64 = frame.iter().map(|v| v * v).sum();
            let mut freq_energy = 0.0;
            for (f, m) in image.magnitudes.column(w).iter().enumerate() {
                let mirrored = f != 0 && !(win % 2 == 0 && f == win / 2);
                freq_energy += if mirrored { 2.0 * m * m } else { m * m };
            }
            freq_energy /= win as f64;
            let err = (time_energy - freq_energy).abs() / time_energy.max(f64::MIN_POSITIVE);
            out.worst_parseval = out.worst_parseval.max(err);
        }
    }
    out
}

pub const H: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-3;

pub struct Fixture {
    pub model: SiameseModel,
    pub store: ImageStore,
    pub batch: PairBatch,
    pub masks: Vec<PairMasks>,
}

pub fn random_config(rng: &mut ChaCha8Rng) -> (NetConfig, (usize, usize)) {
    loop {
        let cfg = NetConfig {
            kernel_size: rng.gen_range(1..=3),
            conv1_filters: rng.gen_range(1..=3),
            conv2_filters: rng.gen_range(1..=3),
            output_dim: rng.gen_range(2..=4),
            l1_lambda: if rng.gen_bool(0.5) { 1e-3 } else { 0.0 },
            margin: 2.0,
            dropout_p: if rng.gen_bool(0.5) { 0.3 } else { 0.0 },
            pooling: if rng.gen_bool(0.7) { Pooling::Max2x2 } else { Pooling::None },
            distance: if rng.gen_bool(0.8) { DistanceKind::Cosine } else { DistanceKind::Euclidean },
            seed: rng.gen(),
            ..NetConfig::default()
        };
        let shape = (rng.gen_range(4..=10), rng.gen_range(4..=10));
        if Shapes::new(&cfg, shape).is_ok() {
            return (cfg, shape);
        }
    }
}

pub fn build_fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let (cfg, shape) = random_config(rng);
    let shapes = Shapes::new(&cfg, shape).unwrap();
    let mut params = Params::zeros(&shapes);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.gen_range(-0.8..0.8);
        }
    }
    let model = SiameseModel::from_params(cfg.clone(), shape, params).unwrap();

    let subjects: Vec<SubjectInfo> = [("a", Label::Case), ("b", Label::Case), ("c", Label::Control)]
        .iter()
        .map(|(id, label)| SubjectInfo { subject_id: id.to_string(), label: *label })
        .collect();
    let images = subjects
        .iter()
        .map(|s| SpectralImage {
            subject_id: s.subject_id.clone(),
            channel_index: 0,
            magnitudes: Array2::from_shape_fn(shape, |_| rng.gen_range(0.0..1.0)),
            freq_resolution_hz: 1.0,
            frame_times_s: (0..shape.1).map(|t| t as f64).collect(),
        })
        .collect();
    let store = ImageStore::from_images(subjects.clone(), 1, images).unwrap();
    let batch = PairBatch { pairs: enumerate_pairs(&subjects, 1) };
    let masks = batch
        .pairs
        .iter()
        .map(|_| PairMasks {
            a: DropoutMasks::sample(&shapes, cfg.dropout_p, rng),
            b: DropoutMasks::sample(&shapes, cfg.dropout_p, rng),
        })
        .collect();
    Fixture { model, store, batch, masks }
}

/// Naive forward pass. Returns the softmax output and the activation pattern
/// (ReLU signs and pooling winners) that determines which piece of the
/// piecewise-smooth function is active.
pub fn oracle_forward(p: &Params, s: &Shapes, x: &[f64], masks: Option<&DropoutMasks>) -> (Vec<f64>, Vec<usize>) {
    let k = s.kernel;
    let mut pattern = Vec::new();

    let conv = |input: &[f64], in_c: usize, h: usize, w: usize, wts: &[f64], bias: &[f64], out_c: usize| {
        let (oh, ow) = (h - k + 1, w - k + 1);
        let mut out = vec![0.0; out_c * oh * ow];
        for o in 0..out_c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bias[o];
                    for c in 0..in_c {
                        for a in 0..k {
                            for b in 0..k {
                                acc += wts[o * in_c * k * k + c * k * k + a * k + b] * input[c * h * w + (i + a) * w + j + b];
                            }
                        }
                    }
                    out[o * oh * ow + i * ow + j] = acc;
                }
            }
        }
        out
    };
    let relu_pool = |z: Vec<f64>, c: usize, h: usize, w: usize, pattern: &mut Vec<usize>| -> Vec<f64> {
        pattern.extend(z.iter().map(|&v| usize::from(v > 0.0)));
        let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        if !s.pooled {
            return a;
        }
        let mut out = Vec::new();
        for ch in 0..c {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    let cells = [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(di, dj)| a[ch * h * w + (2 * i + di) * w + 2 * j + dj]);
                    let mut best = 0;
                    for q in 1..4 {
                        if cells[q] > cells[best] {
                            best = q;
                        }
                    }
                    if cells[best] > 0.0 {
                        pattern.push(best);
                    }
                    out.push(cells[best]);
                }
            }
        }
        out
    };

    let z1 = conv(x, 1, s.input.0, s.input.1, &p.conv1_w, &p.conv1_b, s.filters1);
    let mut h1 = relu_pool(z1, s.filters1, s.conv1.0, s.conv1.1, &mut pattern);
    if let Some(m) = masks {
        for (v, f) in h1.iter_mut().zip(&m.layer1) {
            *v *= f;
        }
    }
    let z2 = conv(&h1, s.filters1, s.pool1.0, s.pool1.1, &p.conv2_w, &p.conv2_b, s.filters2);
    let mut h2 = relu_pool(z2, s.filters2, s.conv2.0, s.conv2.1, &mut pattern);
    if let Some(m) = masks {
        for (v, f) in h2.iter_mut().zip(&m.layer2) {
            *v *= f;
        }
    }
    let logits: Vec<f64> = (0..s.output_dim)
        .map(|o| p.fc_b[o] + (0..s.flat).map(|i| p.fc_w[o * s.flat + i] * h2[i]).sum::<f64>())
        .collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    (logits.iter().map(|l| l.exp() / z).collect(), pattern)
}

pub fn patterns(f: &Fixture, params: &Params) -> Vec<Vec<usize>> {
    let s = f.model.shapes();
    let mut out = Vec::new();
    for (pair, m) in f.batch.pairs.iter().zip(&f.masks) {
        for (subject, mask) in [(pair.subject_a, &m.a), (pair.subject_b, &m.b)] {
            let x = f.store.get(subject, pair.channel).magnitudes.as_slice().unwrap();
            out.push(oracle_forward(params, s, x, Some(mask)).1);
        }
    }
    out
}


/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Default)]
pub struct GradSweep {
    pub configs: usize,
    pub checked: usize,
    /// Parameters whose perturbation crossed a ReLU, pooling or L1 kink.
    pub skipped: usize,
    pub worst: f64,
    pub worst_at: String,
}

/// Central differences for every parameter of `configs` random tiny networks.
pub fn gradient_sweep(seed: u64, configs: usize) -> GradSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradSweep { configs, ..GradSweep::default() };
    for config in 0..configs {
        let mut f = build_fixture(&mut rng);
        let (_, analytic) = gradient(&f.model, &f.store, &f.batch, Some(&f.masks)).unwrap();
        let base_patterns = patterns(&f, &f.model.params);
        let lambda = f.model.config().l1_lambda;

        for (t, name) in Params::NAMES.iter().enumerate() {
            let len = f.model.params.tensors()[t].len();
            for i in 0..len {
                let w0 = f.model.params.tensors()[t][i];
                if lambda > 0.0 && Params::IS_KERNEL[t] && w0.abs() < 2.0 * H {
                    out.skipped += 1;
                    continue;
                }
                let mut eval = |w: f64| {
                    f.model.params.tensors_mut()[t][i] = w;
                    let loss = batch_loss(&f.model, &f.store, &f.batch, Some(&f.masks)).unwrap();
                    (loss, patterns(&f, &f.model.params))
                };
                let (lp, pp) = eval(w0 + H);
                let (lm, pm) = eval(w0 - H);
                f.model.params.tensors_mut()[t][i] = w0;
                if pp != base_patterns || pm != base_patterns {
                    out.skipped += 1;
                    continue;
                }
                let fd = (lp - lm) / (2.0 * H);
                let a = analytic.tensors()[t][i];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                if rel > out.worst {
                    out.worst = rel;
                    out.worst_at = format!("config {config} {name}[{i}]: analytic {a:e}, fd {fd:e}");
                }
                out.checked += 1;
            }
        }
    }
    out
}

/// Largest deviation of `contrastive_loss` from a hand-tabulated grid over
/// y in {0, 1}, d in {0, 0.1, ..., 1} and m in {1, 1.5, 2}.
pub fn loss_grid_error() -> (usize, f64) {
    // neighbours pay d^2, non-neighbours pay max(0, m - d)^2
    let same = [0.0, 0.01, 0.04, 0.09, 0.16, 0.25, 0.36, 0.49, 0.64, 0.81, 1.0];
    let diff_m1 = [1.0, 0.81, 0.64, 0.49, 0.36, 0.25, 0.16, 0.09, 0.04, 0.01, 0.0];
    let diff_m15 = [2.25, 1.96, 1.69, 1.44, 1.21, 1.0, 0.81, 0.64, 0.49, 0.36, 0.25];
    let diff_m2 = [4.0, 3.61, 3.24, 2.89, 2.56, 2.25, 1.96, 1.69, 1.44, 1.21, 1.0];
    let mut cells = 0;
    let mut worst: f64 = 0.0;
    for i in 0..=10 {
        let d = i as f64 / 10.0;
        for (m, table) in [(1.0, &diff_m1), (1.5, &diff_m15), (2.0, &diff_m2)] {
            worst = worst.max((contrastive_loss(1, d, m) - same[i]).abs());
            worst = worst.max((contrastive_loss(0, d, m) - table[i]).abs());
            cells += 2;
        }
    }
    (cells, worst)
}

/// Worst KKT residual of a trained SVM on its own training rows: the margin
/// `y f(x)` must be >= 1 at alpha = 0, == 1 inside (0, C) and <= 1 at C.
pub fn kkt_violation(svm: &SvmModel, x: &Array2<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for (t, row) in x.rows().into_iter().enumerate() {
        let m = svm.y[t] * svm.decision(row.as_slice().unwrap());
        let a = svm.alpha[t];
        let v = if a <= 1e-12 {
            (1.0 - m).max(0.0)
        } else if a >= svm.c - 1e-12 {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Two well-separated blobs along the first axis, alternating labels.
pub fn separable_blobs(rng: &mut ChaCha8Rng, n: usize) -> (Array2<f64>, Vec<Label>) {
    let mut labels = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let case = i % 2 == 0;
        let shift = if case { 2.0 } else { -2.0 };
        rows.push([shift + rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0)]);
        labels.push(if case { Label::Case } else { Label::Control });
    }
    (Array2::from_shape_fn((n, 2), |(i, j)| rows[i][j]), labels)
}

/// Worst KKT and equality residuals over `reps` linear and RBF fits.
pub fn svm_residuals(seed: u64, reps: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut kkt, mut eq): (f64, f64) = (0.0, 0.0);
    for kernel in [SvmKernel::Linear, SvmKernel::Rbf] {
        for _ in 0..reps {
            let (x, labels) = separable_blobs(&mut rng, 30);
            let svm = SvmModel::fit(&x, &labels, kernel, 10.0, 0.5, 1e-3, 100).unwrap();
            kkt = kkt.max(kkt_violation(&svm, &x));
            eq = eq.max(svm.alpha.iter().zip(&svm.y).map(|(a, y)| a * y).sum::<f64>().abs());
        }
    }
    (kkt, eq)
}

/// 1-D kNN fixture: cases at 0, 1, 5 and controls at 3, 4, 9. Returns the
/// number of queries checked and a description of every mismatch.
pub fn knn_hand_mismatches() -> (usize, Vec<String>) {
    use Label::{Case, Control};
    let x = Array2::from_shape_vec((6, 1), vec![0.0, 1.0, 5.0, 3.0, 4.0, 9.0]).unwrap();
    let y = vec![Case, Case, Case, Control, Control, Control];
    let knn1 = KnnModel::fit(x.clone(), y.clone(), 1);
    let knn3 = KnnModel::fit(x.clone(), y.clone(), 3);
    let knn2 = KnnModel::fit(x, y, 2);
    // (query, 1-nn label, 3-nn majority), worked out from the sorted distances
    let expected = [
        (-1.0, Case, Case),      // 0 | 0, 1, 3
        (2.2, Control, Control), // 3 | 3, 1, 4
        (3.4, Control, Control), // 3 | 3, 4, 5
        (4.8, Case, Control),    // 5 | 5, 4, 3
        (7.5, Control, Control), // 9 | 9, 5, 4
    ];
    let mut bad = Vec::new();
    for (q, nn1, nn3) in expected {
        if knn1.predict(&[q]).label != nn1 {
            bad.push(format!("1-nn at {q}"));
        }
        if knn3.predict(&[q]).label != nn3 {
            bad.push(format!("3-nn at {q}"));
        }
    }
    // neighbours 1 (case) and 3 (control) tie, which goes to Case
    if knn2.predict(&[2.0]).label != Case {
        bad.push("2-nn tie at 2".into());
    }
    (2 * expected.len() + 1, bad)
}

fn gauss_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

/// Gaussian NB on cases {0, 2} (mean 1, var 1) and controls {4, 6, 8}
/// (mean 6, var 8/3) against closed-form posteriors on a query grid.
/// Returns the query count, label mismatches and worst posterior error.
pub fn nb_hand_check() -> (usize, usize, f64) {
    use Label::{Case, Control};
    let x = Array2::from_shape_vec((5, 1), vec![0.0, 2.0, 4.0, 6.0, 8.0]).unwrap();
    let nb = GaussianNb::fit(&x, &[Case, Case, Control, Control, Control]);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for i in 0..=40 {
        let q = -2.0 + 0.3 * i as f64;
        let lc = 0.4f64.ln() + gauss_log_pdf(q, 1.0, 1.0);
        let ln = 0.6f64.ln() + gauss_log_pdf(q, 6.0, 8.0 / 3.0);
        let p = nb.predict(&[q]);
        if p.label != if lc >= ln { Case } else { Control } {
            mismatches += 1;
        }
        worst = worst.max((p.score - 1.0 / (1.0 + (ln - lc).exp())).abs());
    }
    (41, mismatches, worst)
}
