//! A small convolutional network with exact backpropagation, trained by
//! mini-batch gradient descent for binary classification of compressed
//! feature tensors.
//!
//! Every conv block is 3x3/pad-1 convolution, ReLU, then 2x2/stride-2 max
//! pooling, so spatial dims halve per block. The reference path is 64-bit
//! floats throughout; training aborts on the first non-finite loss or
//! parameter instead of clipping.

mod checkpoint;
mod layers;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use layers::*;
use ndarray::{Array1, Array2, Array3};
use rayon::prelude::*;

pub const OUTPUT_CLASSES: usize = 2;

/// Fixed chunk size for parallel batch reductions. Gradients are summed
/// chunk-by-chunk in index order, so results do not depend on thread count.
const REDUCE_CHUNK: usize = 8;

/// Layer topology: conv blocks (3x3 kernel, ReLU, 2x2 max pool) followed by
/// fully connected layers and a 2-way softmax output.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct NetworkSpec {
    /// (channels, height, width) of one input tensor.
    pub input_shape: (usize, usize, usize),
    /// Output channels of each conv block.
    pub conv_channels: Vec<usize>,
    /// Hidden fully-connected widths; the final 2-unit layer is implied.
    pub fc_hidden: Vec<usize>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            input_shape: (3, 64, 64),
            conv_channels: vec![16, 32, 64],
            fc_hidden: vec![128],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LayerShape {
    Conv { in_ch: usize, out_ch: usize },
    Fc { inp: usize, out: usize },
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::config("network input shape must be positive"));
        }
        let div = 1usize << self.conv_channels.len();
        if h % div != 0 || w % div != 0 {
            return Err(Error::config(format!(
                "input {h}x{w} must be divisible by 2^{} for {} pooling stages",
                self.conv_channels.len(),
                self.conv_channels.len()
            )));
        }
        if self.conv_channels.iter().any(|&ch| ch == 0)
            || self.fc_hidden.iter().any(|&fc| fc == 0)
        {
            return Err(Error::config("layer widths must be positive"));
        }
        Ok(())
    }

    /// Width of the flattened tensor entering the first FC layer.
    pub fn flattened_width(&self) -> usize {
        let (c, h, w) = self.input_shape;
        let blocks = self.conv_channels.len();
        let ch = self.conv_channels.last().copied().unwrap_or(c);
        ch * (h >> blocks) * (w >> blocks)
    }

    pub(crate) fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut shapes = Vec::new();
        let mut ch = self.input_shape.0;
        for &oc in &self.conv_channels {
            shapes.push(LayerShape::Conv { in_ch: ch, out_ch: oc });
            ch = oc;
        }
        let mut width = self.flattened_width();
        for &fw in &self.fc_hidden {
            shapes.push(LayerShape::Fc { inp: width, out: fw });
            width = fw;
        }
        shapes.push(LayerShape::Fc { inp: width, out: OUTPUT_CLASSES });
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|s| match *s {
                LayerShape::Conv { in_ch, out_ch } => out_ch * in_ch * 9 + out_ch,
                LayerShape::Fc { inp, out } => out * inp + out,
            })
            .sum()
    }

    /// Canonical text form, also used as the checkpoint header.
    pub fn descriptor(&self) -> String {
        let (c, h, w) = self.input_shape;
        let mut s = format!("input {c} {h} {w}\n");
        for &oc in &self.conv_channels {
            s.push_str(&format!("conv {oc}\n"));
        }
        for &fc in &self.fc_hidden {
            s.push_str(&format!("fc {fc}\n"));
        }
        s.push_str(&format!("output {OUTPUT_CLASSES}\n"));
        s
    }

    /// FNV-1a hash of the descriptor, reported in experiment manifests.
    pub fn digest(&self) -> String {
        format!("{:016x}", crate::util::fnv1a64(self.descriptor().as_bytes()))
    }
}

/// One layer's parameters. Conv weights are stored as (out_ch, in_ch*9),
/// FC weights as (out, in); biases are per output unit.
#[derive(Debug, Clone)]
pub(crate) struct LayerParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Adaptive-moment gradient descent.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    /// Plain momentum SGD.
    Momentum { momentum: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Adam { .. } => "adam",
            OptimizerKind::Momentum { .. } => "momentum",
        }
    }
}

#[derive(Debug, Clone)]
struct OptState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    step: u64,
}

/// Learnable parameters plus optimizer accumulators.
#[derive(Debug, Clone)]
pub struct NetworkState {
    layers: Vec<LayerParams>,
    opt: OptState,
    pub rng_seed: u64,
}

/// Per-layer parameter gradients, shaped like the parameters themselves.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    fn zeros_like(state: &NetworkState) -> Self {
        Self {
            layers: state
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(other.layers.iter()) {
            *w += ow;
            *b += ob;
        }
    }

    fn scale(&mut self, factor: f64) {
        for (w, b) in self.layers.iter_mut() {
            w.mapv_inplace(|v| v * factor);
            b.mapv_inplace(|v| v * factor);
        }
    }

    /// All gradient entries in canonical order (per layer: weights
    /// row-major, then bias).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

/// Training hyperparameters. The loss is fixed: 2-way softmax
/// cross-entropy.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the per-epoch shuffle stream.
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::config("learning_rate must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Softmax output for one sample.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub probabilities: [f64; OUTPUT_CLASSES],
    pub predicted_label: usize,
}

/// Loss/accuracy curve entry produced by [`train`].
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Result of [`evaluate`] over a dataset.
#[derive(Debug, Clone, Copy)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub count: usize,
}

/// A labeled sample: (3, H, W) features and a class in {0, 1}.
pub type LabeledSample<'a> = (&'a Array3<f64>, usize);

/// Initialize parameters from the SplitMix64 stream of `seed`: weights are
/// fan-in-scaled normals (std = sqrt(2 / fan_in), drawn row-major per layer
/// in layer order), biases zero.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<NetworkState> {
    spec.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut layers = Vec::new();
    for shape in spec.layer_shapes() {
        let (rows, cols) = match shape {
            LayerShape::Conv { in_ch, out_ch } => (out_ch, in_ch * 9),
            LayerShape::Fc { inp, out } => (out, inp),
        };
        let std = (2.0 / cols as f64).sqrt();
        let w = Array2::from_shape_fn((rows, cols), |_| rng.next_normal() * std);
        let b = Array1::zeros(rows);
        layers.push(LayerParams { w, b });
    }
    let opt = OptState {
        m: layers.iter().map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len()))).collect(),
        v: layers.iter().map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len()))).collect(),
        step: 0,
    };
    Ok(NetworkState { layers, opt, rng_seed: seed })
}

impl NetworkState {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Number of optimizer steps taken so far.
    pub fn optimizer_steps(&self) -> u64 {
        self.opt.step
    }

    fn locate(&self, index: usize) -> (usize, bool, usize) {
        let mut offset = index;
        for (li, l) in self.layers.iter().enumerate() {
            if offset < l.w.len() {
                return (li, true, offset);
            }
            offset -= l.w.len();
            if offset < l.b.len() {
                return (li, false, offset);
            }
            offset -= l.b.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Read parameter `index` in canonical order (per layer: weights
    /// row-major, then bias).
    pub fn get_param(&self, index: usize) -> f64 {
        let (li, is_w, off) = self.locate(index);
        let l = &self.layers[li];
        if is_w {
            l.w.as_slice().unwrap()[off]
        } else {
            l.b[off]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (li, is_w, off) = self.locate(index);
        let l = &mut self.layers[li];
        if is_w {
            l.w.as_slice_mut().unwrap()[off] = value;
        } else {
            l.b[off] = value;
        }
    }

    /// Bitwise hash of all parameters; used to assert evaluation purity.
    pub fn param_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.param_count() * 8);
        for l in &self.layers {
            for v in l.w.iter().chain(l.b.iter()) {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        crate::util::fnv1a64(&bytes)
    }

    fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub(crate) fn from_layer_tensors(
        tensors: Vec<(Array2<f64>, Array1<f64>)>,
        rng_seed: u64,
    ) -> Self {
        let layers: Vec<LayerParams> =
            tensors.into_iter().map(|(w, b)| LayerParams { w, b }).collect();
        let opt = OptState {
            m: layers
                .iter()
                .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
                .collect(),
            v: layers
                .iter()
                .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
                .collect(),
            step: 0,
        };
        NetworkState { layers, opt, rng_seed }
    }
}

struct BlockCache {
    cols: Array2<f64>,
    relu: Array3<f64>,
    pool_idx: Array3<u8>,
    in_dim: (usize, usize, usize),
}

struct FcCache {
    input: Array1<f64>,
    /// Post-ReLU output for hidden layers; `None` for the output layer.
    activated: Option<Array1<f64>>,
}

struct SampleCache {
    blocks: Vec<BlockCache>,
    pooled_dim: (usize, usize, usize),
    fcs: Vec<FcCache>,
}

fn check_shape(spec: &NetworkSpec, x: &Array3<f64>) -> Result<()> {
    if x.dim() != spec.input_shape {
        return Err(Error::dim(format!(
            "input tensor is {:?} but the network expects {:?}",
            x.dim(),
            spec.input_shape
        )));
    }
    Ok(())
}

fn forward_sample(
    state: &NetworkState,
    spec: &NetworkSpec,
    x: &Array3<f64>,
) -> Result<(Array1<f64>, SampleCache)> {
    check_shape(spec, x)?;
    let n_blocks = spec.conv_channels.len();
    let mut blocks = Vec::with_capacity(n_blocks);
    let mut cur = x.clone();
    for li in 0..n_blocks {
        let in_dim = cur.dim();
        let l = &state.layers[li];
        let (mut pre, cols) = conv_forward(&cur, &l.w, &l.b);
        relu_inplace3(&mut pre);
        if !pre.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                epoch: 0,
                detail: format!("non-finite activation in conv block {li}"),
            });
        }
        let (pooled, idx) = maxpool2_forward(&pre);
        blocks.push(BlockCache { cols, relu: pre, pool_idx: idx, in_dim });
        cur = pooled;
    }
    let pooled_dim = cur.dim();
    let mut flat = cur
        .into_shape_with_order(pooled_dim.0 * pooled_dim.1 * pooled_dim.2)
        .expect("flatten");
    let mut fcs = Vec::new();
    let n_fc = spec.fc_hidden.len() + 1;
    for fi in 0..n_fc {
        let l = &state.layers[n_blocks + fi];
        let input = flat;
        let mut out = fc_forward(&input, &l.w, &l.b);
        let activated = if fi + 1 < n_fc {
            relu_inplace1(&mut out);
            Some(out.clone())
        } else {
            None
        };
        fcs.push(FcCache { input, activated });
        flat = out;
    }
    if !flat.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence { epoch: 0, detail: "non-finite logits".into() });
    }
    Ok((flat, SampleCache { blocks, pooled_dim, fcs }))
}

fn backward_sample(
    state: &NetworkState,
    spec: &NetworkSpec,
    cache: &SampleCache,
    grad_logits: Array1<f64>,
) -> Vec<(Array2<f64>, Array1<f64>)> {
    let n_blocks = spec.conv_channels.len();
    let n_fc = spec.fc_hidden.len() + 1;
    let mut grads: Vec<(Array2<f64>, Array1<f64>)> = state
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
        .collect();

    let mut g = grad_logits;
    for fi in (0..n_fc).rev() {
        let li = n_blocks + fi;
        let fc = &cache.fcs[fi];
        if let Some(act) = &fc.activated {
            relu_mask1(&mut g, act);
        }
        let gw = g
            .view()
            .into_shape_with_order((g.len(), 1))
            .unwrap()
            .dot(&fc.input.view().into_shape_with_order((1, fc.input.len())).unwrap());
        grads[li].0 = gw;
        grads[li].1 = g.clone();
        g = state.layers[li].w.t().dot(&g);
    }

    let mut g3 = g.into_shape_with_order(cache.pooled_dim).expect("unflatten");
    for li in (0..n_blocks).rev() {
        let block = &cache.blocks[li];
        let relu_dim = block.relu.dim();
        let mut grad_pre = maxpool2_backward(&g3, &block.pool_idx, relu_dim);
        relu_mask3(&mut grad_pre, &block.relu);
        let (grad_in, gw, gb) =
            conv_backward(&block.cols, &state.layers[li].w, &grad_pre, block.in_dim);
        grads[li].0 = gw;
        grads[li].1 = gb;
        g3 = grad_in;
    }
    grads
}

/// Inference over a batch: softmax probabilities per sample.
pub fn forward(
    state: &NetworkState,
    spec: &NetworkSpec,
    batch: &[&Array3<f64>],
) -> Result<Vec<Prediction>> {
    batch
        .par_iter()
        .map(|x| {
            let (logits, _) = forward_sample(state, spec, x)?;
            let (p, _) = log_softmax(&logits);
            let predicted_label = if p[1] > p[0] { 1 } else { 0 };
            Ok(Prediction { probabilities: [p[0], p[1]], predicted_label })
        })
        .collect()
}

/// Mean cross-entropy loss over the batch plus gradients for every
/// parameter, computed by backpropagation.
pub fn loss_and_grads(
    state: &NetworkState,
    spec: &NetworkSpec,
    batch: &[LabeledSample<'_>],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::config("loss_and_grads: empty batch"));
    }
    if let Some((_, bad)) = batch.iter().find(|(_, l)| *l >= OUTPUT_CLASSES) {
        return Err(Error::config(format!("label {bad} out of range 0..{OUTPUT_CLASSES}")));
    }
    // Fixed-size chunks keep the floating-point reduction order independent
    // of thread scheduling.
    let partials: Vec<Result<(f64, Gradients)>> = batch
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grads = Gradients::zeros_like(state);
            for &(x, label) in chunk {
                let (logits, cache) = forward_sample(state, spec, x)?;
                let (p, logp) = log_softmax(&logits);
                loss -= logp[label];
                let mut dlogits = p;
                dlogits[label] -= 1.0;
                let sample = backward_sample(state, spec, &cache, dlogits);
                for ((w, b), (sw, sb)) in grads.layers.iter_mut().zip(sample.into_iter()) {
                    *w += &sw;
                    *b += &sb;
                }
            }
            Ok((loss, grads))
        })
        .collect();

    let mut total_loss = 0.0;
    let mut total = Gradients::zeros_like(state);
    for partial in partials {
        let (loss, grads) = partial?;
        total_loss += loss;
        total.add_assign(&grads);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    if !total_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0, detail: "non-finite loss".into() });
    }
    Ok((total_loss * inv, total))
}

fn optimizer_step(state: &mut NetworkState, grads: &Gradients, config: &TrainConfig) {
    state.opt.step += 1;
    let lr = config.learning_rate;
    match config.optimizer {
        OptimizerKind::Adam { beta1, beta2, epsilon } => {
            let t = state.opt.step as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            for (li, l) in state.layers.iter_mut().enumerate() {
                let (gw, gb) = &grads.layers[li];
                let (mw, mb) = &mut state.opt.m[li];
                let (vw, vb) = &mut state.opt.v[li];
                for (((p, g), m), v) in l
                    .w
                    .iter_mut()
                    .zip(gw.iter())
                    .zip(mw.iter_mut())
                    .zip(vw.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + epsilon);
                }
                for (((p, g), m), v) in l
                    .b
                    .iter_mut()
                    .zip(gb.iter())
                    .zip(mb.iter_mut())
                    .zip(vb.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + epsilon);
                }
            }
        }
        OptimizerKind::Momentum { momentum } => {
            for (li, l) in state.layers.iter_mut().enumerate() {
                let (gw, gb) = &grads.layers[li];
                let (mw, mb) = &mut state.opt.m[li];
                for ((p, g), m) in l.w.iter_mut().zip(gw.iter()).zip(mw.iter_mut()) {
                    *m = momentum * *m + g;
                    *p -= lr * *m;
                }
                for ((p, g), m) in l.b.iter_mut().zip(gb.iter()).zip(mb.iter_mut()) {
                    *m = momentum * *m + g;
                    *p -= lr * *m;
                }
            }
        }
    }
}

/// Train in place with mini-batch gradient descent. Shuffling is seeded per
/// epoch from `config.seed`, so identical inputs reproduce identical final
/// parameters bit for bit. Returns one [`EpochStats`] per epoch.
pub fn train(
    state: &mut NetworkState,
    spec: &NetworkSpec,
    config: &TrainConfig,
    train_set: &[LabeledSample<'_>],
    val_set: &[LabeledSample<'_>],
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    spec.validate()?;
    if train_set.is_empty() {
        return Err(Error::data("train: empty training set"));
    }
    let mut stats = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = SplitMix64::new(derive_seed(config.seed, epoch as u64));
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<LabeledSample<'_>> =
                chunk.iter().map(|&i| train_set[i]).collect();
            let (loss, grads) = loss_and_grads(state, spec, &batch).map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence { epoch, detail },
                other => other,
            })?;
            optimizer_step(state, &grads, config);
            if !state.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: "non-finite parameter after update".into(),
                });
            }
            loss_sum += loss * chunk.len() as f64;
        }
        let val = evaluate(state, spec, val_set)?;
        stats.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: val.mean_loss,
            val_accuracy: val.accuracy,
        });
    }
    Ok(stats)
}

/// Accuracy and mean cross-entropy over a dataset; does not mutate state.
pub fn evaluate(
    state: &NetworkState,
    spec: &NetworkSpec,
    data: &[LabeledSample<'_>],
) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::data("evaluate: empty dataset"));
    }
    let per_sample: Vec<Result<(f64, bool)>> = data
        .par_iter()
        .map(|&(x, label)| {
            let (logits, _) = forward_sample(state, spec, x)?;
            let (p, logp) = log_softmax(&logits);
            let predicted = if p[1] > p[0] { 1 } else { 0 };
            Ok((-logp[label], predicted == label))
        })
        .collect();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for r in per_sample {
        let (loss, ok) = r?;
        loss_sum += loss;
        if ok {
            correct += 1;
        }
    }
    Ok(EvalMetrics {
        accuracy: correct as f64 / data.len() as f64,
        mean_loss: loss_sum / data.len() as f64,
        count: data.len(),
    })
}
