//! Three-layer linear network with per-sample feature normalization.
//!
//! `f(W; x) = softmax(W₃ · σ(norm(W₂ · σ(norm(W₁ x)))))` where `σ` is a leaky
//! rectifier with slope 0.1 and `norm` standardizes each hidden
//! pre-activation vector to zero mean and unit variance. There are no bias
//! terms. The same hidden widths (256, 128) serve the 8192-input map model
//! and the 180-input corner model.
//!
//! Training is plain minibatch SGD on clamped cross-entropy. Every update is
//! rescaled so that `‖ΔWᵢ‖_F ≤ clip_fro` for each layer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

pub const HIDDEN1: usize = 256;
pub const HIDDEN2: usize = 128;
pub const N_CLASSES: usize = 12;
pub const LEAKY_SLOPE: f64 = 0.1;
pub const NORM_EPS: f64 = 1e-6;
/// Probability floor inside the loss; bounds the loss by `-ln(1e-7)`.
pub const PROB_FLOOR: f64 = 1e-7;
pub const INIT_SCALE: f64 = 0.1;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TWRMLP1\0";

/// Loss bound `B = −ln(PROB_FLOOR)`.
pub fn loss_bound() -> f64 {
    -PROB_FLOOR.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// `W₁: h1×d_in`, `W₂: h2×h1`, `W₃: classes×h2`.
    pub layers: [Matrix; 3],
    /// Per-sample standardization of hidden pre-activations. Switched off
    /// only for Lipschitz checks on the bare linear chain.
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub eval_every: usize,
    pub clip_fro: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch: 32,
            lr: 0.00147,
            eval_every: 10,
            clip_fro: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument("epochs, batch and eval_every must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite() && self.clip_fro > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need lr ≥ 0 and clip_fro > 0, got {} and {}",
                self.lr, self.clip_fro
            )));
        }
        Ok(())
    }

    pub fn rounds(&self, n_train: usize) -> usize {
        self.epochs * n_train.div_ceil(self.batch)
    }
}

/// Labeled feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub features: Matrix,
    pub labels: Vec<usize>,
    /// Tester height of this split, m.
    pub height: f64,
}

impl Split {
    pub fn new(features: Matrix, labels: Vec<usize>, height: f64) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::dims(features.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= N_CLASSES) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range")));
        }
        if !features.is_finite() {
            return Err(Error::InvalidArgument("non-finite features".into()));
        }
        Ok(Self {
            features,
            labels,
            height,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn rows(&self, idx: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let d = self.features.cols();
        let mut x = Vec::with_capacity(idx.len() * d);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.features.row(i));
            y.push(self.labels[i]);
        }
        (x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Train,
    Val,
    Test1,
    Test2,
}

impl SplitKind {
    pub const ALL: [SplitKind; 4] = [SplitKind::Train, SplitKind::Val, SplitKind::Test1, SplitKind::Test2];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test1 => "test1",
            SplitKind::Test2 => "test2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub val: Split,
    pub test1: Split,
    pub test2: Split,
}

impl Dataset {
    pub fn split(&self, kind: SplitKind) -> &Split {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test1 => &self.test1,
            SplitKind::Test2 => &self.test2,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.train.features.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub accuracy: f64,
    pub loss: f64,
}

/// Metrics at one evaluation point, indexed like [`SplitKind::ALL`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub epoch: usize,
    pub metrics: [Metrics; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub evals: Vec<EvalRecord>,
    /// `‖ΔWᵢ‖_F` of every applied update.
    pub step_norms: Vec<[f64; 3]>,
    pub n_rounds: usize,
    /// End-of-training metrics on the full splits.
    pub final_metrics: [Metrics; 4],
    pub n_train: usize,
}

impl TrainTrace {
    pub fn final_of(&self, kind: SplitKind) -> Metrics {
        self.final_metrics[SplitKind::ALL.iter().position(|k| *k == kind).unwrap()]
    }
}

/// Per-layer gradients of the mean batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: [Matrix; 3],
}

/// `C = A·B (+ C when accumulate)` with explicit strides; `A` is `m×k`,
/// `B` is `k×n`, `C` is row-major `m×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    let extent = |rows: usize, cols: usize, (rs, cs): (isize, isize)| {
        if rows == 0 || cols == 0 {
            0
        } else {
            ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
        }
    };
    assert!(a.len() >= extent(m, k, a_strides));
    assert!(b.len() >= extent(k, n, b_strides));
    assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the extents checked above cover every element dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `Y = X · Wᵀ` for `X: batch×in`, `W: out×in`.
fn linear_batch(x: &[f64], batch: usize, w: &Matrix) -> Vec<f64> {
    let (out, inp) = w.shape();
    let mut y = vec![0.0; batch * out];
    gemm(batch, inp, out, x, (inp as isize, 1), w.as_slice(), (1, inp as isize), &mut y, false);
    y
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

fn leaky_grad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Standardizes `z` in place; returns `sqrt(var + ε)`.
fn standardize(z: &mut [f64]) -> f64 {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let s = (var + NORM_EPS).sqrt();
    z.iter_mut().for_each(|v| *v = (*v - mean) / s);
    s
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// `−ln(max(p_label, 1e−7))`.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}

/// Intermediate values of a batched forward pass.
struct ForwardCache {
    batch: usize,
    /// Normalized (or raw) pre-activations of layers 1 and 2.
    pre: [Vec<f64>; 2],
    /// Normalization scales per sample, layers 1 and 2.
    scales: [Vec<f64>; 2],
    /// Activations of layers 1 and 2.
    act: [Vec<f64>; 2],
    probs: Vec<f64>,
}

impl MlpModel {
    /// Fresh model with the standard hidden widths.
    pub fn init(d_in: usize, seed: u64) -> Self {
        Self::with_widths(d_in, HIDDEN1, HIDDEN2, N_CLASSES, seed)
    }

    /// Weights drawn uniformly from `±0.1/√fan_in`.
    pub fn with_widths(d_in: usize, h1: usize, h2: usize, n_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |rows: usize, cols: usize| {
            let bound = INIT_SCALE / (cols as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
        };
        let w1 = layer(h1, d_in);
        let w2 = layer(h2, h1);
        let w3 = layer(n_out, h2);
        Self {
            layers: [w1, w2, w3],
            normalize: true,
        }
    }

    pub fn from_layers(layers: [Matrix; 3]) -> Result<Self> {
        if layers[1].cols() != layers[0].rows() || layers[2].cols() != layers[1].rows() {
            return Err(Error::dims(
                "chained layer shapes",
                format!("{:?} {:?} {:?}", layers[0].shape(), layers[1].shape(), layers[2].shape()),
            ));
        }
        Ok(Self {
            layers,
            normalize: true,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers[2].rows()
    }

    /// Largest layer width including the input, `max(d_in, h1, h2, classes)`.
    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|w| w.rows().max(w.cols()))
            .max()
            .unwrap_or(0)
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::dims(self.input_dim(), len));
        }
        Ok(())
    }

    fn check_split(&self, split: &Split) -> Result<()> {
        self.check_input(split.features.cols())?;
        if let Some(&bad) = split.labels.iter().find(|&&l| l >= self.n_outputs()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} needs more than {} outputs",
                self.n_outputs()
            )));
        }
        Ok(())
    }

    fn hidden(&self, z: &mut [f64], width: usize, scales: &mut Vec<f64>, act: &mut Vec<f64>) {
        for row in z.chunks_mut(width) {
            let s = if self.normalize { standardize(row) } else { 1.0 };
            scales.push(s);
            act.extend(row.iter().map(|&v| leaky(v)));
        }
    }

    fn forward_cached(&self, x: &[f64], batch: usize) -> ForwardCache {
        let [w1, w2, w3] = &self.layers;
        let mut z1 = linear_batch(x, batch, w1);
        let mut s1 = Vec::with_capacity(batch);
        let mut a1 = Vec::with_capacity(z1.len());
        self.hidden(&mut z1, w1.rows(), &mut s1, &mut a1);
        let mut z2 = linear_batch(&a1, batch, w2);
        let mut s2 = Vec::with_capacity(batch);
        let mut a2 = Vec::with_capacity(z2.len());
        self.hidden(&mut z2, w2.rows(), &mut s2, &mut a2);
        let mut probs = linear_batch(&a2, batch, w3);
        for row in probs.chunks_mut(w3.rows()) {
            softmax_in_place(row);
        }
        ForwardCache {
            batch,
            pre: [z1, z2],
            scales: [s1, s2],
            act: [a1, a2],
            probs,
        }
    }

    /// Class probabilities for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input".into()));
        }
        Ok(self.forward_cached(x, 1).probs)
    }

    /// Row-major `batch × classes` probabilities.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check_input(if batch == 0 { self.input_dim() } else { x.len() / batch })?;
        if x.len() != batch * self.input_dim() {
            return Err(Error::dims(batch * self.input_dim(), x.len()));
        }
        Ok(self.forward_cached(x, batch).probs)
    }

    /// Backpropagation through a cached pass; returns gradients of the mean
    /// loss over the batch.
    fn backward_cached(&self, x: &[f64], labels: &[usize], cache: &ForwardCache) -> Gradients {
        let [w1, w2, w3] = &self.layers;
        let b = cache.batch;
        let inv_b = 1.0 / b as f64;
        let (h1, h2, k) = (w1.rows(), w2.rows(), w3.rows());

        // dL/dlogits = p − y, zero where the probability floor is active.
        let mut g3 = cache.probs.clone();
        for (row, &label) in g3.chunks_mut(k).zip(labels) {
            if row[label] < PROB_FLOOR {
                row.iter_mut().for_each(|v| *v = 0.0);
            } else {
                row[label] -= 1.0;
                row.iter_mut().for_each(|v| *v *= inv_b);
            }
        }
        let mut dw3 = Matrix::zeros(k, h2);
        gemm(k, b, h2, &g3, (1, k as isize), &cache.act[1], (h2 as isize, 1), dw3.as_mut_slice(), false);

        let mut g2 = vec![0.0; b * h2];
        gemm(b, k, h2, &g3, (k as isize, 1), w3.as_slice(), (h2 as isize, 1), &mut g2, false);
        self.through_hidden(&mut g2, &cache.pre[1], &cache.scales[1], h2);
        let mut dw2 = Matrix::zeros(h2, h1);
        gemm(h2, b, h1, &g2, (1, h2 as isize), &cache.act[0], (h1 as isize, 1), dw2.as_mut_slice(), false);

        let mut g1 = vec![0.0; b * h1];
        gemm(b, h2, h1, &g2, (h2 as isize, 1), w2.as_slice(), (h1 as isize, 1), &mut g1, false);
        self.through_hidden(&mut g1, &cache.pre[0], &cache.scales[0], h1);
        let d = w1.cols();
        let mut dw1 = Matrix::zeros(h1, d);
        gemm(h1, b, d, &g1, (1, h1 as isize), x, (d as isize, 1), dw1.as_mut_slice(), false);

        Gradients {
            layers: [dw1, dw2, dw3],
        }
    }

    /// Turns the gradient w.r.t. a hidden activation into the gradient
    /// w.r.t. the pre-normalization values, in place.
    fn through_hidden(&self, grad: &mut [f64], pre: &[f64], scales: &[f64], width: usize) {
        for ((g, n), &s) in grad.chunks_mut(width).zip(pre.chunks(width)).zip(scales) {
            g.iter_mut().zip(n).for_each(|(gv, &nv)| *gv *= leaky_grad(nv));
            if self.normalize {
                let w = width as f64;
                let mean_g = g.iter().sum::<f64>() / w;
                let mean_gn = g.iter().zip(n).map(|(a, b)| a * b).sum::<f64>() / w;
                g.iter_mut()
                    .zip(n)
                    .for_each(|(gv, &nv)| *gv = (*gv - mean_g - nv * mean_gn) / s);
            }
        }
    }

    /// Exact gradients of the mean clamped cross-entropy over a batch.
    pub fn backward(&self, x: &[f64], labels: &[usize]) -> Result<Gradients> {
        let b = labels.len();
        if b == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if x.len() != b * self.input_dim() {
            return Err(Error::dims(b * self.input_dim(), x.len()));
        }
        let cache = self.forward_cached(x, b);
        Ok(self.backward_cached(x, labels, &cache))
    }

    /// Mean loss and accuracy of a batch.
    pub fn batch_metrics(&self, x: &[f64], labels: &[usize]) -> Result<Metrics> {
        let probs = self.forward_batch(x, labels.len())?;
        Ok(metrics_of(&probs, labels, self.n_outputs()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(CHECKPOINT_MAGIC)?;
        for layer in &self.layers {
            write(&(layer.rows() as u32).to_le_bytes())?;
            write(&(layer.cols() as u32).to_le_bytes())?;
            let mut buf = Vec::with_capacity(layer.as_slice().len() * 8);
            for v in layer.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            write(&buf)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut read_layer = || -> Result<Matrix> {
            let mut dims = [0u8; 8];
            r.read_exact(&mut dims).map_err(|_| bad("truncated layer header"))?;
            let rows = u32::from_le_bytes(dims[..4].try_into().unwrap()) as usize;
            let cols = u32::from_le_bytes(dims[4..].try_into().unwrap()) as usize;
            let mut bytes = vec![0u8; rows * cols * 8];
            r.read_exact(&mut bytes).map_err(|_| bad("truncated layer data"))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Matrix::from_vec(rows, cols, data)
        };
        let layers = [read_layer()?, read_layer()?, read_layer()?];
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Self::from_layers(layers)
    }
}

fn metrics_of(probs: &[f64], labels: &[usize], k: usize) -> Metrics {
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (row, &label) in probs.chunks(k).zip(labels) {
        let argmax = row
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
        if argmax == label {
            correct += 1;
        }
        loss += cross_entropy(row, label);
    }
    let n = labels.len() as f64;
    Metrics {
        accuracy: correct as f64 / n,
        loss: loss / n,
    }
}

/// Rescales `delta` to Frobenius norm `clip` when it is larger; returns the
/// final norm.
pub fn clip_update(delta: &mut Matrix, clip: f64) -> f64 {
    let norm = delta.frobenius_norm();
    if norm <= clip {
        return norm;
    }
    delta.scale(clip / norm);
    let mut out = delta.frobenius_norm();
    // Rounding can leave the rescaled norm a few ulps above the clip.
    while out > clip {
        delta.scale(1.0 - 4.0 * f64::EPSILON);
        out = delta.frobenius_norm();
    }
    out
}

/// One SGD update with per-layer Frobenius clipping. Returns `‖ΔWᵢ‖_F`.
pub fn sgd_step(model: &mut MlpModel, grads: &Gradients, cfg: &TrainConfig) -> Result<[f64; 3]> {
    let mut norms = [0.0; 3];
    for (i, (w, g)) in model.layers.iter_mut().zip(&grads.layers).enumerate() {
        if w.shape() != g.shape() {
            return Err(Error::dims(format!("{:?}", w.shape()), format!("{:?}", g.shape())));
        }
        let mut delta = g.map(|v| -cfg.lr * v);
        norms[i] = clip_update(&mut delta, cfg.clip_fro);
        w.as_mut_slice()
            .iter_mut()
            .zip(delta.as_slice())
            .for_each(|(a, d)| *a += d);
    }
    Ok(norms)
}

const EVAL_CHUNK: usize = 64;

/// Accuracy and mean loss over a whole split.
pub fn evaluate(model: &MlpModel, split: &Split) -> Result<Metrics> {
    if split.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty split".into()));
    }
    model.check_split(split)?;
    let k = model.n_outputs();
    let mut probs = Vec::with_capacity(split.len() * k);
    let idx: Vec<usize> = (0..split.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, _) = split.rows(chunk);
        probs.extend(model.forward_cached(&x, chunk.len()).probs);
    }
    Ok(metrics_of(&probs, &split.labels, k))
}

/// Minibatch SGD over `dataset.train`.
///
/// Every `eval_every` optimizer steps, and after the last step, the
/// validation and both test splits are evaluated in full; the training entry
/// of those records is the mean over the minibatches seen since the previous
/// record. `final_metrics` holds full-split numbers for all four splits.
pub fn train(model: &MlpModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainTrace)> {
    cfg.validate()?;
    for kind in SplitKind::ALL {
        let split = dataset.split(kind);
        if split.is_empty() {
            return Err(Error::InvalidArgument(format!("{} split is empty", kind.name())));
        }
        model.check_split(split)?;
    }
    let mut model = model.clone();
    let train = &dataset.train;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut step_norms = Vec::with_capacity(cfg.rounds(train.len()));
    let mut evals = Vec::new();
    let mut window = (0.0, 0.0, 0usize);
    let total = cfg.rounds(train.len());
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let (x, y) = train.rows(chunk);
            let cache = model.forward_cached(&x, chunk.len());
            let m = metrics_of(&cache.probs, &y, model.n_outputs());
            let n = chunk.len() as f64;
            window.0 += m.accuracy * n;
            window.1 += m.loss * n;
            window.2 += chunk.len();
            let grads = model.backward_cached(&x, &y, &cache);
            let norms = sgd_step(&mut model, &grads, cfg)?;
            if !model.layers.iter().all(Matrix::is_finite) {
                return Err(Error::Numeric(format!("weights diverged at step {step}")));
            }
            step_norms.push(norms);
            step += 1;
            if step % cfg.eval_every == 0 || step == total {
                let seen = window.2 as f64;
                let train_m = Metrics {
                    accuracy: window.0 / seen,
                    loss: window.1 / seen,
                };
                window = (0.0, 0.0, 0);
                evals.push(EvalRecord {
                    step,
                    epoch,
                    metrics: [
                        train_m,
                        evaluate(&model, &dataset.val)?,
                        evaluate(&model, &dataset.test1)?,
                        evaluate(&model, &dataset.test2)?,
                    ],
                });
            }
        }
    }
    let final_metrics = [
        evaluate(&model, &dataset.train)?,
        evaluate(&model, &dataset.val)?,
        evaluate(&model, &dataset.test1)?,
        evaluate(&model, &dataset.test2)?,
    ];
    let trace = TrainTrace {
        evals,
        step_norms,
        n_rounds: step,
        final_metrics,
        n_train: train.len(),
    };
    Ok((model, trace))
}
