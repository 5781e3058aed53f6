//! From-scratch stacked-autoencoder core: sigmoid feedforward, backprop
//! deltas, gradient descent training (greedy layer-wise pretraining followed
//! by whole-model fine-tuning), and the model file format.
//!
//! The model is a palindromic stack of fully-connected sigmoid layers, e.g.
//! `[64, 16, 4, 16, 64]`. The first half encodes a tile down to the
//! bottleneck code, the second half mirrors it back. Training is plain
//! mini-batch gradient descent; everything is seeded and single-threaded so
//! identical seeds and inputs produce bit-identical models.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::image_io::TileSet;

const MODEL_MAGIC: &[u8; 4] = b"SAEM";
const MODEL_VERSION: u8 = 1;

/// Stream separator so fine-tuning's shuffle order is not correlated with
/// pretraining's weight draws under the same seed.
const FINE_TUNE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error)]
pub enum SaeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("layer dims must be palindromic with at least 3 entries, got {0:?}")]
    BadLayerDims(Vec<usize>),
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("unsupported model format version {0}")]
    VersionMismatch(u8),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One fully-connected layer: `z = W a + b` with `W` stored row-major
/// (`out_dim` x `in_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Layer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    /// Uniform init in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    fn glorot(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Layer {
            in_dim,
            out_dim,
            weights,
            biases: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self, SaeError> {
        if weights.len() != in_dim * out_dim || biases.len() != out_dim {
            return Err(SaeError::DimensionMismatch(format!(
                "layer {in_dim}->{out_dim} needs {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                biases.len()
            )));
        }
        Ok(Layer { in_dim, out_dim, weights, biases })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    /// Mirrored layer for the decoder half: weights transposed, zero biases.
    fn mirrored(&self) -> Layer {
        let mut weights = vec![0.0; self.weights.len()];
        for r in 0..self.out_dim {
            for c in 0..self.in_dim {
                weights[c * self.out_dim + r] = self.weights[r * self.in_dim + c];
            }
        }
        Layer {
            in_dim: self.out_dim,
            out_dim: self.in_dim,
            weights,
            biases: vec![0.0; self.in_dim],
        }
    }

    /// `out = W a + b`, accumulated in index order. Every forward path in
    /// this module funnels through here so encode/decode reproduce the full
    /// forward pass bit-exactly.
    fn affine_into(&self, a: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(a.len(), self.in_dim);
        out.clear();
        for (j, &b) in self.biases.iter().enumerate() {
            let row = &self.weights[j * self.in_dim..(j + 1) * self.in_dim];
            let mut acc = b;
            for (w, x) in row.iter().zip(a) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epochs per pretraining stage.
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    /// L2 penalty on weights; 0 disables the term entirely.
    pub weight_decay: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            pretrain_epochs: 200,
            finetune_epochs: 500,
            batch_size: 32,
            weight_decay: 0.0,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), SaeError> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(SaeError::BadConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(SaeError::BadConfig("batch_size must be at least 1".into()));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(SaeError::BadConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Palindromic stack of sigmoid layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
}

fn validate_dims(dims: &[usize]) -> Result<(), SaeError> {
    let palindromic = dims.iter().eq(dims.iter().rev());
    if dims.len() < 3 || dims.contains(&0) || !palindromic {
        return Err(SaeError::BadLayerDims(dims.to_vec()));
    }
    Ok(())
}

impl SaeModel {
    /// Fresh model with seeded Glorot-uniform weights and zero biases.
    pub fn random(layer_dims: &[usize], seed: u64) -> Result<Self, SaeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with_rng(layer_dims, &mut rng)
    }

    fn random_with_rng(layer_dims: &[usize], rng: &mut ChaCha8Rng) -> Result<Self, SaeError> {
        validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], rng))
            .collect();
        Ok(SaeModel { layer_dims: layer_dims.to_vec(), layers })
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self, SaeError> {
        validate_dims(layer_dims)?;
        let layers = layer_dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(SaeModel { layer_dims: layer_dims.to_vec(), layers })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Index of the code layer in `layer_dims` (the middle).
    pub fn bottleneck_index(&self) -> usize {
        (self.layer_dims.len() - 1) / 2
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Width of the code produced at `level` encoder steps.
    pub fn code_dim_at(&self, level: usize) -> usize {
        self.layer_dims[level]
    }

    pub fn code_dim(&self) -> usize {
        self.layer_dims[self.bottleneck_index()]
    }

    /// Serialized byte image of the model (the on-disk format).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        out.extend_from_slice(&(self.layer_dims.len() as u32).to_le_bytes());
        for &d in &self.layer_dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for layer in &self.layers {
            for w in &layer.weights {
                out.extend_from_slice(&w.to_le_bytes());
            }
            for b in &layer.biases {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SaeError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MODEL_MAGIC {
            return Err(SaeError::CorruptModel("bad magic bytes".into()));
        }
        let version = cur.take(1)?[0];
        if version != MODEL_VERSION {
            return Err(SaeError::VersionMismatch(version));
        }
        let dim_count = cur.u32()? as usize;
        if dim_count > 1024 {
            return Err(SaeError::CorruptModel(format!("implausible dim count {dim_count}")));
        }
        let mut layer_dims = Vec::with_capacity(dim_count);
        for _ in 0..dim_count {
            layer_dims.push(cur.u32()? as usize);
        }
        validate_dims(&layer_dims)
            .map_err(|_| SaeError::CorruptModel(format!("bad layer dims {layer_dims:?}")))?;
        let mut layers = Vec::with_capacity(dim_count - 1);
        for w in layer_dims.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            let weights: Vec<f64> = (0..in_dim * out_dim)
                .map(|_| cur.f64())
                .collect::<Result<_, _>>()?;
            let biases: Vec<f64> = (0..out_dim).map(|_| cur.f64()).collect::<Result<_, _>>()?;
            layers.push(Layer { in_dim, out_dim, weights, biases });
        }
        if cur.pos != bytes.len() {
            return Err(SaeError::CorruptModel(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        Ok(SaeModel { layer_dims, layers })
    }

    /// 64-bit content hash of the serialized model, stored in compressed
    /// files so a decoder can detect a mismatched model.
    pub fn model_id(&self) -> u64 {
        let digest = Sha256::digest(self.to_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SaeError> {
        if self.pos + n > self.bytes.len() {
            return Err(SaeError::CorruptModel("file truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, SaeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SaeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_model(model: &SaeModel, path: impl AsRef<Path>) -> Result<(), SaeError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&model.to_bytes())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SaeModel, SaeError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    SaeModel::from_bytes(&bytes)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-layer pre-activations and activations of one forward pass.
/// `act[0]` is the input; `pre[l]` feeds `act[l + 1]`.
#[derive(Debug, Clone)]
pub struct Activations {
    pub pre: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.act.last().unwrap()
    }
}

pub fn forward(model: &SaeModel, x: &[f64]) -> Result<Activations, SaeError> {
    if x.len() != model.input_dim() {
        return Err(SaeError::DimensionMismatch(format!(
            "input length {} but model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let mut act = vec![x.to_vec()];
    let mut pre = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let mut z = Vec::new();
        layer.affine_into(act.last().unwrap(), &mut z);
        act.push(z.iter().map(|&v| sigmoid(v)).collect());
        pre.push(z);
    }
    Ok(Activations { pre, act })
}

/// Output-layer delta `-(y - a) * f'(z)`, with the sigmoid derivative
/// computed from the cached activation as `a (1 - a)`.
pub fn output_delta(a_out: &[f64], y: &[f64]) -> Result<Vec<f64>, SaeError> {
    if a_out.len() != y.len() {
        return Err(SaeError::DimensionMismatch(format!(
            "output length {} vs target length {}",
            a_out.len(),
            y.len()
        )));
    }
    Ok(a_out
        .iter()
        .zip(y)
        .map(|(&a, &t)| (a - t) * a * (1.0 - a))
        .collect())
}

/// Hidden-layer delta `(W^T delta_next) * f'(z)` where `layer` maps the
/// activations `a` forward and `delta_next` is the following layer's delta.
pub fn hidden_delta(layer: &Layer, delta_next: &[f64], a: &[f64]) -> Result<Vec<f64>, SaeError> {
    if delta_next.len() != layer.out_dim || a.len() != layer.in_dim {
        return Err(SaeError::DimensionMismatch(format!(
            "layer is {}->{} but got delta length {} and activation length {}",
            layer.in_dim,
            layer.out_dim,
            delta_next.len(),
            a.len()
        )));
    }
    let mut out = vec![0.0; layer.in_dim];
    for (j, &d) in delta_next.iter().enumerate() {
        let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += w * d;
        }
    }
    for (o, &av) in out.iter_mut().zip(a) {
        *o *= av * (1.0 - av);
    }
    Ok(out)
}

/// Weight and bias gradients for one layer: the outer product
/// `delta_next a^T` (row-major) and `delta_next` itself.
pub fn gradients(delta_next: &[f64], a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut wg = Vec::with_capacity(delta_next.len() * a.len());
    for &d in delta_next {
        for &av in a {
            wg.push(d * av);
        }
    }
    (wg, delta_next.to_vec())
}

/// Mean squared-error cost over a sample set: `(1/m) sum 0.5 ||a_out - y||^2`,
/// plus `weight_decay / 2 * sum ||W||^2` when `weight_decay > 0`.
pub fn cost<'a, I>(model: &SaeModel, samples: I, weight_decay: f64) -> Result<f64, SaeError>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, y) in samples {
        let acts = forward(model, x)?;
        let out = acts.output();
        if out.len() != y.len() {
            return Err(SaeError::DimensionMismatch(format!(
                "target length {} but model outputs {}",
                y.len(),
                out.len()
            )));
        }
        total += 0.5 * out.iter().zip(y).map(|(&a, &t)| (a - t) * (a - t)).sum::<f64>();
        count += 1;
    }
    if count == 0 {
        return Err(SaeError::EmptySampleSet);
    }
    let mut j = total / count as f64;
    if weight_decay > 0.0 {
        let sq: f64 = model
            .layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .map(|&w| w * w)
            .sum();
        j += 0.5 * weight_decay * sq;
    }
    Ok(j)
}

fn reconstruction_cost(model: &SaeModel, inputs: &[Vec<f64>], decay: f64) -> Result<f64, SaeError> {
    cost(model, inputs.iter().map(|t| (t.as_slice(), t.as_slice())), decay)
}

/// Mini-batch gradient descent on the reconstruction objective (y = x).
///
/// A fixed learning rate is used, halved for subsequent epochs whenever an
/// epoch ends with a higher full-set cost than the previous one. The update,
/// shuffle and accumulation orders are all fixed, so the result is a pure
/// function of (model, inputs, config, rng state).
fn sgd_reconstruct(
    model: &mut SaeModel,
    inputs: &[Vec<f64>],
    epochs: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, SaeError> {
    let n_layers = model.layers.len();
    let mut lr = cfg.learning_rate;
    let mut prev_cost = reconstruction_cost(model, inputs, cfg.weight_decay)?;

    let mut indices: Vec<usize> = (0..inputs.len()).collect();
    // per-layer scratch reused across samples
    let mut acts: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
    let mut grad_w: Vec<Vec<f64>> =
        model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> =
        model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect();

    for _epoch in 0..epochs {
        shuffle(&mut indices, rng);
        for batch in indices.chunks(cfg.batch_size) {
            for g in grad_w.iter_mut().chain(grad_b.iter_mut()) {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &si in batch {
                let x = &inputs[si];
                // forward
                acts[0].clear();
                acts[0].extend_from_slice(x);
                for l in 0..n_layers {
                    let (head, tail) = acts.split_at_mut(l + 1);
                    model.layers[l].affine_into(&head[l], &mut tail[0]);
                    tail[0].iter_mut().for_each(|z| *z = sigmoid(*z));
                }
                // backward: output delta, then propagate
                let last = &acts[n_layers];
                deltas[n_layers - 1] = last
                    .iter()
                    .zip(x)
                    .map(|(&a, &t)| (a - t) * a * (1.0 - a))
                    .collect();
                for l in (0..n_layers - 1).rev() {
                    let (lower, upper) = deltas.split_at_mut(l + 1);
                    propagate_delta(&model.layers[l + 1], &upper[0], &acts[l + 1], &mut lower[l]);
                }
                // accumulate gradients
                for l in 0..n_layers {
                    let a = &acts[l];
                    let d = &deltas[l];
                    let gw = &mut grad_w[l];
                    for (j, &dj) in d.iter().enumerate() {
                        let row = &mut gw[j * a.len()..(j + 1) * a.len()];
                        for (g, &av) in row.iter_mut().zip(a) {
                            *g += dj * av;
                        }
                    }
                    for (g, &dj) in grad_b[l].iter_mut().zip(d) {
                        *g += dj;
                    }
                }
            }
            // apply the batch-mean update
            let scale = lr / batch.len() as f64;
            for l in 0..n_layers {
                let layer = &mut model.layers[l];
                if cfg.weight_decay > 0.0 {
                    let decay = lr * cfg.weight_decay;
                    for (w, &g) in layer.weights.iter_mut().zip(&grad_w[l]) {
                        *w -= scale * g + decay * *w;
                    }
                } else {
                    for (w, &g) in layer.weights.iter_mut().zip(&grad_w[l]) {
                        *w -= scale * g;
                    }
                }
                for (b, &g) in layer.biases.iter_mut().zip(&grad_b[l]) {
                    *b -= scale * g;
                }
            }
        }
        let c = reconstruction_cost(model, inputs, cfg.weight_decay)?;
        if !c.is_finite() {
            return Err(SaeError::Diverged(format!("non-finite cost after epoch (lr {lr})")));
        }
        if c > prev_cost {
            lr *= 0.5;
        }
        prev_cost = c;
    }
    Ok(prev_cost)
}

/// `delta = (W^T delta_next) * a (1 - a)`, writing into `out`.
/// Same arithmetic as `hidden_delta`, allocation-free for the training loop.
fn propagate_delta(layer: &Layer, delta_next: &[f64], a: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.resize(layer.in_dim, 0.0);
    for (j, &d) in delta_next.iter().enumerate() {
        let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += w * d;
        }
    }
    for (o, &av) in out.iter_mut().zip(a) {
        *o *= av * (1.0 - av);
    }
}

/// Fisher-Yates shuffle driven by the training RNG stream.
fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

/// Greedy layer-wise pretraining.
///
/// For each encoder level k a one-hidden-layer autoencoder
/// `dims[k] -> dims[k+1] -> dims[k]` is trained on the previous level's
/// codes. The trained encoder halves become the model's encoder layers; the
/// decoder layers start as their mirrors (weights transposed, zero biases)
/// and are refined later by `fine_tune`.
pub fn pretrain(
    tiles: &TileSet,
    layer_dims: &[usize],
    cfg: &TrainConfig,
) -> Result<SaeModel, SaeError> {
    validate_dims(layer_dims)?;
    cfg.validate()?;
    if tiles.tiles.is_empty() {
        return Err(SaeError::EmptySampleSet);
    }
    if layer_dims[0] != tiles.tile_len() {
        return Err(SaeError::DimensionMismatch(format!(
            "layer_dims[0] = {} but tiles have length {}",
            layer_dims[0],
            tiles.tile_len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let bottleneck = (layer_dims.len() - 1) / 2;

    let mut encoders: Vec<Layer> = Vec::with_capacity(bottleneck);
    let mut inputs: Vec<Vec<f64>> = tiles.tiles.clone();
    for k in 0..bottleneck {
        let stage_dims = [layer_dims[k], layer_dims[k + 1], layer_dims[k]];
        let mut stage = SaeModel::random_with_rng(&stage_dims, &mut rng)?;
        sgd_reconstruct(&mut stage, &inputs, cfg.pretrain_epochs, cfg, &mut rng)?;
        let encoder = stage.layers.swap_remove(0);
        // next stage trains on this stage's codes
        let mut z = Vec::new();
        for input in &mut inputs {
            encoder.affine_into(input, &mut z);
            *input = z.iter().map(|&v| sigmoid(v)).collect();
        }
        encoders.push(encoder);
    }

    let layer_count = layer_dims.len() - 1;
    let mut layers: Vec<Option<Layer>> = vec![None; layer_count];
    for (k, enc) in encoders.into_iter().enumerate() {
        layers[layer_count - 1 - k] = Some(enc.mirrored());
        layers[k] = Some(enc);
    }
    // even-length palindromes have a square middle layer that is its own
    // mirror and belongs to no pretraining stage; it starts random
    let layers = layers
        .into_iter()
        .enumerate()
        .map(|(l, slot)| match slot {
            Some(layer) => layer,
            None => Layer::glorot(layer_dims[l], layer_dims[l + 1], &mut rng),
        })
        .collect();

    Ok(SaeModel { layer_dims: layer_dims.to_vec(), layers })
}

/// Whole-model fine-tuning: mini-batch gradient descent over every layer
/// (encoder and decoder, untied) on the reconstruction objective.
pub fn fine_tune(
    mut model: SaeModel,
    tiles: &TileSet,
    cfg: &TrainConfig,
) -> Result<SaeModel, SaeError> {
    cfg.validate()?;
    if tiles.tiles.is_empty() {
        return Err(SaeError::EmptySampleSet);
    }
    if model.input_dim() != tiles.tile_len() {
        return Err(SaeError::DimensionMismatch(format!(
            "model input dim {} but tiles have length {}",
            model.input_dim(),
            tiles.tile_len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ FINE_TUNE_STREAM);
    sgd_reconstruct(&mut model, &tiles.tiles, cfg.finetune_epochs, cfg, &mut rng)?;
    Ok(model)
}

/// Forward pass truncated at the model's bottleneck.
pub fn encode(model: &SaeModel, tile: &[f64]) -> Result<Vec<f64>, SaeError> {
    encode_at(model, tile, model.bottleneck_index())
}

/// Forward pass through the first `level` layers only (1 <= level <=
/// bottleneck). `level` selects the compression ratio on a multi-stage
/// model: level 1 is the first hidden layer, level 2 the second.
pub fn encode_at(model: &SaeModel, tile: &[f64], level: usize) -> Result<Vec<f64>, SaeError> {
    if level == 0 || level > model.bottleneck_index() {
        return Err(SaeError::DimensionMismatch(format!(
            "code level {level} out of range 1..={}",
            model.bottleneck_index()
        )));
    }
    if tile.len() != model.input_dim() {
        return Err(SaeError::DimensionMismatch(format!(
            "tile length {} but model expects {}",
            tile.len(),
            model.input_dim()
        )));
    }
    let mut a = tile.to_vec();
    let mut z = Vec::new();
    for layer in &model.layers[..level] {
        layer.affine_into(&a, &mut z);
        a.clear();
        a.extend(z.iter().map(|&v| sigmoid(v)));
    }
    Ok(a)
}

/// Decoder-only forward pass from the model's bottleneck to the output.
pub fn decode(model: &SaeModel, code: &[f64]) -> Result<Vec<f64>, SaeError> {
    decode_at(model, code, model.bottleneck_index())
}

/// Decode a code produced by `encode_at(.., level)`. At the bottleneck this
/// runs every remaining layer (so encode then decode reproduces the full
/// forward pass exactly); at shallower levels it runs the mirrored tail of
/// the decoder.
pub fn decode_at(model: &SaeModel, code: &[f64], level: usize) -> Result<Vec<f64>, SaeError> {
    let bottleneck = model.bottleneck_index();
    if level == 0 || level > bottleneck {
        return Err(SaeError::DimensionMismatch(format!(
            "code level {level} out of range 1..={bottleneck}"
        )));
    }
    if code.len() != model.code_dim_at(level) {
        return Err(SaeError::DimensionMismatch(format!(
            "code length {} but level {level} has width {}",
            code.len(),
            model.code_dim_at(level)
        )));
    }
    let start = if level == bottleneck {
        bottleneck
    } else {
        model.layers.len() - level
    };
    let mut a = code.to_vec();
    let mut z = Vec::new();
    for layer in &model.layers[start..] {
        layer.affine_into(&a, &mut z);
        a.clear();
        a.extend(z.iter().map(|&v| sigmoid(v)));
    }
    Ok(a)
}
