//! Minimal dense-network engine: ReLU + inverted-dropout hidden layers, a
//! single linear output logit, backpropagation over parameters and over
//! inputs, and Adam. Topologies are fixed small MLPs; there is no general
//! autodiff graph.

mod adam;
mod checkpoint;
mod loss;

pub use adam::{AdamConfig, AdamState, VecAdam};
pub use checkpoint::{load_model, save_model, CHECKPOINT_VERSION};
pub use loss::{class_weights, distillation_loss, sigmoid, weighted_bce_loss};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

/// One dense layer; weights are row-major with shape `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn affine_into(&self, input: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut sum = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                sum += w * x;
            }
            *slot = sum;
        }
    }
}

/// Dense network with ReLU + dropout hidden layers and one linear output
/// logit. The sigmoid lives in the losses and metrics, never in the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    dropout_prob: f64,
}

/// Forward/eval mode; train mode samples dropout masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-batch activations recorded by a forward pass, consumed by
/// [`Mlp::backward_params`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    mode: Mode,
    /// `activations[l]` is the input to layer `l` (so `activations[0]` is the
    /// batch itself).
    activations: Vec<Matrix>,
    /// Pre-activation affine outputs per layer.
    pre: Vec<Matrix>,
    /// Dropout masks per hidden layer, already scaled by `1/(1-p)`; all-ones
    /// in eval mode.
    masks: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].rows()
    }
}

/// Parameter-shaped tensors: gradients, optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTensors {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerTensors>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerTensors {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|t| t.weights.iter().chain(&t.biases).all(|v| v.is_finite()))
    }

    /// `self += a * other`, used for mixing loss gradients.
    pub fn axpy(&mut self, a: f64, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape("gradient layer count mismatch".to_owned()));
        }
        for (s, o) in self.layers.iter_mut().zip(&other.layers) {
            if s.weights.len() != o.weights.len() || s.biases.len() != o.biases.len() {
                return Err(Error::Shape("gradient tensor shape mismatch".to_owned()));
            }
            for (x, y) in s.weights.iter_mut().zip(&o.weights) {
                *x += a * y;
            }
            for (x, y) in s.biases.iter_mut().zip(&o.biases) {
                *x += a * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for t in &mut self.layers {
            for x in t.weights.iter_mut().chain(t.biases.iter_mut()) {
                *x *= a;
            }
        }
    }
}

impl Mlp {
    /// Build a network `input_dim -> hidden... -> 1` with He-uniform weights
    /// and zero biases.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        dropout_prob: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config("layer dims must be > 0".to_owned()));
        }
        if !(0.0..=1.0).contains(&dropout_prob) {
            return Err(Error::Config(format!(
                "dropout_prob {dropout_prob} outside [0, 1]"
            )));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let mut layer = DenseLayer::zeros(fan_in, fan_out);
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
            layers.push(layer);
        }
        Ok(Self {
            layers,
            dropout_prob,
        })
    }

    /// Assemble a model from explicit layers; dimensions must chain and the
    /// output must be a single logit.
    pub fn from_layers(layers: Vec<DenseLayer>, dropout_prob: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model needs at least one layer".to_owned()));
        }
        if !(0.0..=1.0).contains(&dropout_prob) {
            return Err(Error::Config(format!(
                "dropout_prob {dropout_prob} outside [0, 1]"
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer dims do not chain: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        if layers.last().unwrap().out_dim != 1 {
            return Err(Error::Shape(
                "output layer must produce one logit".to_owned(),
            ));
        }
        for l in &layers {
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::Shape("layer tensor sizes inconsistent".to_owned()));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite parameter".to_owned()));
            }
        }
        Ok(Self {
            layers,
            dropout_prob,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn dropout_prob(&self) -> f64 {
        self.dropout_prob
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flat parameter access (weights then biases, layer by layer); used by
    /// the finite-difference oracles.
    pub fn get_param(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                return l.biases[idx];
            }
            idx -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, v: f64) {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                l.weights[idx] = v;
                return;
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                l.biases[idx] = v;
                return;
            }
            idx -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// True when every parameter bit-matches `other`.
    pub fn bitwise_eq(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.in_dim == b.in_dim
                    && a.out_dim == b.out_dim
                    && a.weights
                        .iter()
                        .zip(&b.weights)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                    && a.biases
                        .iter()
                        .zip(&b.biases)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Schema(format!(
                "batch has {} columns, model expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn forward_impl(
        &self,
        batch: &Matrix,
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<f64>, ForwardTrace)> {
        self.check_batch(batch)?;
        let n = batch.rows();
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut masks = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut current = batch.clone();
        let p = self.dropout_prob;
        let keep_scale = if p < 1.0 { 1.0 / (1.0 - p) } else { 0.0 };

        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Matrix::zeros(n, layer.out_dim);
            for r in 0..n {
                layer.affine_into(current.row(r), z.row_mut(r));
            }
            let is_output = l == n_layers - 1;
            if is_output {
                let logits = (0..n).map(|r| z.get(r, 0)).collect();
                activations.push(current);
                pre.push(z);
                return Ok((
                    logits,
                    ForwardTrace {
                        mode,
                        activations,
                        pre,
                        masks,
                    },
                ));
            }
            let mut mask = Matrix::zeros(n, layer.out_dim);
            let mut post = Matrix::zeros(n, layer.out_dim);
            match (mode, &mut rng) {
                (Mode::Train, Some(rng)) if p > 0.0 => {
                    for r in 0..n {
                        for c in 0..layer.out_dim {
                            let m = if rng.gen::<f64>() < p {
                                0.0
                            } else {
                                keep_scale
                            };
                            mask.set(r, c, m);
                            post.set(r, c, z.get(r, c).max(0.0) * m);
                        }
                    }
                }
                (Mode::Train, None) if p > 0.0 => {
                    return Err(Error::Config(
                        "train-mode forward with dropout needs an RNG".to_owned(),
                    ));
                }
                _ => {
                    for r in 0..n {
                        for c in 0..layer.out_dim {
                            mask.set(r, c, 1.0);
                            post.set(r, c, z.get(r, c).max(0.0));
                        }
                    }
                }
            }
            activations.push(current);
            pre.push(z);
            masks.push(mask);
            current = post;
        }
        unreachable!("loop returns at the output layer");
    }

    /// Deterministic eval-mode pass: no dropout, no RNG.
    pub fn forward_eval(&self, batch: &Matrix) -> Result<(Vec<f64>, ForwardTrace)> {
        self.forward_impl(batch, Mode::Eval, None)
    }

    /// Train-mode pass with inverted dropout: each hidden activation is
    /// zeroed with probability `dropout_prob`, survivors scaled by
    /// `1/(1-p)`.
    pub fn forward_train(
        &self,
        batch: &Matrix,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, ForwardTrace)> {
        self.forward_impl(batch, Mode::Train, Some(rng))
    }

    /// Eval-mode class probabilities `sigmoid(logit)` per row.
    pub fn predict_proba(&self, batch: &Matrix) -> Result<Vec<f64>> {
        let (logits, _) = self.forward_eval(batch)?;
        Ok(logits.into_iter().map(sigmoid).collect())
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        if trace.pre.len() != self.layers.len() {
            return Err(Error::Shape("trace layer count mismatch".to_owned()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if trace.activations[l].cols() != layer.in_dim || trace.pre[l].cols() != layer.out_dim {
                return Err(Error::Shape(format!("stale trace at layer {l}")));
            }
        }
        Ok(())
    }

    /// Backpropagate `dloss_dlogits` to parameter gradients using a recorded
    /// trace. Gradients are summed over the batch; any mean-scaling belongs
    /// to the loss gradient itself.
    pub fn backward_params(
        &self,
        trace: &ForwardTrace,
        dloss_dlogits: &[f64],
    ) -> Result<Gradients> {
        self.check_trace(trace)?;
        let n = trace.batch_size();
        if dloss_dlogits.len() != n {
            return Err(Error::Shape(format!(
                "got {} logit gradients for batch of {}",
                dloss_dlogits.len(),
                n
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut dz = Matrix::zeros(n, 1);
        for r in 0..n {
            dz.set(r, 0, dloss_dlogits[r]);
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let inputs = &trace.activations[l];
            let g = &mut grads.layers[l];
            for r in 0..n {
                let x = inputs.row(r);
                for o in 0..layer.out_dim {
                    let d = dz.get(r, o);
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let wrow = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (gw, xi) in wrow.iter_mut().zip(x) {
                        *gw += d * xi;
                    }
                }
            }
            if l > 0 {
                let prev_pre = &trace.pre[l - 1];
                let mask = &trace.masks[l - 1];
                let mut dz_prev = Matrix::zeros(n, layer.in_dim);
                for r in 0..n {
                    for o in 0..layer.out_dim {
                        let d = dz.get(r, o);
                        if d == 0.0 {
                            continue;
                        }
                        let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                        let drow = dz_prev.row_mut(r);
                        for (slot, w) in drow.iter_mut().zip(wrow) {
                            *slot += d * w;
                        }
                    }
                    for i in 0..layer.in_dim {
                        let gate = if prev_pre.get(r, i) > 0.0 {
                            mask.get(r, i)
                        } else {
                            0.0
                        };
                        dz_prev.set(r, i, dz_prev.get(r, i) * gate);
                    }
                }
                dz = dz_prev;
            }
        }
        Ok(grads)
    }

    /// Gradient of the loss with respect to the inputs, via an eval-mode
    /// pass (extraction never uses dropout). Parameters are untouched.
    pub fn backward_inputs(&self, batch: &Matrix, dloss_dlogits: &[f64]) -> Result<Matrix> {
        let (_, trace) = self.forward_eval(batch)?;
        let n = batch.rows();
        if dloss_dlogits.len() != n {
            return Err(Error::Shape(format!(
                "got {} logit gradients for batch of {}",
                dloss_dlogits.len(),
                n
            )));
        }
        let mut dz = Matrix::zeros(n, 1);
        for r in 0..n {
            dz.set(r, 0, dloss_dlogits[r]);
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut dx = Matrix::zeros(n, layer.in_dim);
            for r in 0..n {
                for o in 0..layer.out_dim {
                    let d = dz.get(r, o);
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let drow = dx.row_mut(r);
                    for (slot, w) in drow.iter_mut().zip(wrow) {
                        *slot += d * w;
                    }
                }
                if l > 0 {
                    let prev_pre = &trace.pre[l - 1];
                    for i in 0..layer.in_dim {
                        if prev_pre.get(r, i) <= 0.0 {
                            dx.set(r, i, 0.0);
                        }
                    }
                }
            }
            dz = dx;
        }
        Ok(dz)
    }
}
