//! Small fully connected networks with batch normalization, dropout, L1
//! regularization and an optional fixed-point fake-quantization path.
//!
//! Each hidden layer computes `dense → [batch norm] → activation →
//! [quantize] → [dropout]`; the output layer is a plain dense layer producing
//! logits. Masked weights read as exactly zero everywhere.

mod io;
mod train;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Activation, ArchitectureSpec};
use crate::data::Standardizer;
use crate::fixed::FixedPointFormat;

pub use io::{BnFile, LayerFile, NetworkFile, NETWORK_FORMAT, NETWORK_FORMAT_VERSION};
pub use train::{
    evaluate, fit, predict_classes, train_epochs, training_splits, Adam, Metric, TrainConfig, TrainError, TrainReport,
};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-3;
pub const LEAKY_RELU_SLOPE: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("input has {found} features, network expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("{0} targets for {1} samples")]
    TargetCount(usize, usize),
    #[error("loss {0:?} does not accept these targets")]
    TargetKind(LossKind),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network file: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxCrossEntropy,
    BinaryCrossEntropyWithLogits,
    MeanSquaredError,
}

/// Training targets: class labels or real-valued outputs (one row per sample).
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Values(&'a Array2<f64>),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.nrows(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; dropout when an RNG is supplied.
    Train,
    /// Running statistics; no dropout.
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[fan_in × fan_out]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub mask: Array2<bool>,
    pub bn: Option<BatchNorm>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn unmasked(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn density(&self) -> f64 {
        self.unmasked() as f64 / self.mask.len() as f64
    }

    /// `weights ⊙ mask`
    pub fn masked_weights(&self) -> Array2<f64> {
        Zip::from(&self.weights).and(&self.mask).map_collect(|&w, &m| if m { w } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
    pub dropout_rate: f64,
    pub l1_lambda: f64,
    pub loss: LossKind,
    pub quant: Option<FixedPointFormat>,
    /// Standardization applied to raw inputs before the first layer.
    pub input_norm: Option<Standardizer>,
}

/// Trainable parameters and batch-norm statistics, without masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub layers: Vec<LayerParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub bn: Option<BatchNorm>,
}

/// Gradient of the total loss for every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

/// Address of one scalar parameter, for finite-difference checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, unit: usize },
    Gamma { layer: usize, unit: usize },
    Beta { layer: usize, unit: usize },
}

struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
}

/// Per-layer batch mean and variance seen by batch norm during a training step.
pub(crate) type BatchStats = Vec<Option<(Array1<f64>, Array1<f64>)>>;

struct LayerCache {
    input: Array2<f64>,
    w_used: Array2<f64>,
    bn: Option<BnCache>,
    /// Activation input (after batch norm).
    pre_act: Array2<f64>,
    /// Activation output before quantization.
    post_act: Array2<f64>,
    /// Inverted-dropout multipliers.
    dropout: Option<Array2<f64>>,
}

fn activate(a: Activation, y: f64) -> f64 {
    match a {
        Activation::Relu => y.max(0.0),
        Activation::Tanh => y.tanh(),
        Activation::Sigmoid => sigmoid(y),
        Activation::LeakyRelu => {
            if y > 0.0 {
                y
            } else {
                LEAKY_RELU_SLOPE * y
            }
        }
        Activation::None => y,
    }
}

fn activation_slope(a: Activation, y: f64) -> f64 {
    match a {
        Activation::Relu => {
            if y > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - y.tanh().powi(2),
        Activation::Sigmoid => {
            let s = sigmoid(y);
            s * (1.0 - s)
        }
        Activation::LeakyRelu => {
            if y > 0.0 {
                1.0
            } else {
                LEAKY_RELU_SLOPE
            }
        }
        Activation::None => 1.0,
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Network {
    /// Layers `sizes[0] → sizes[1] → … → sizes[last]`; every layer but the
    /// last gets `activation` (and batch norm when requested).
    ///
    /// Weights are uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero,
    /// masks all ones.
    pub fn new(
        sizes: &[usize],
        activation: Activation,
        batch_norm: bool,
        dropout_rate: f64,
        l1_lambda: f64,
        loss: LossKind,
        seed: u64,
    ) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s >= 1), "invalid layer sizes {sizes:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, pair)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
                let hidden = l < last;
                DenseLayer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    mask: Array2::from_elem((fan_in, fan_out), true),
                    bn: (hidden && batch_norm).then(|| BatchNorm::new(fan_out)),
                    activation: if hidden { activation } else { Activation::None },
                }
            })
            .collect();
        Self { layers, dropout_rate, l1_lambda, loss, quant: None, input_norm: None }
    }

    /// Network for a decoded architecture. One output unit means binary
    /// cross-entropy on logits; more means softmax cross-entropy.
    pub fn build(spec: &ArchitectureSpec, input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&spec.layer_widths);
        sizes.push(output_dim);
        let loss = if output_dim == 1 {
            LossKind::BinaryCrossEntropyWithLogits
        } else {
            LossKind::SoftmaxCrossEntropy
        };
        Self::new(&sizes, spec.activation, spec.batch_norm, spec.dropout_rate, spec.l1_lambda, loss, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::fan_out)
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.fan_in(), l.fan_out())).collect()
    }

    /// Weights exactly as the forward pass reads them: masked, then
    /// quantized when a fixed-point format is attached.
    pub fn forward_weights(&self, layer: usize) -> Array2<f64> {
        let mut w = self.layers[layer].masked_weights();
        if let Some(fmt) = self.quant {
            w.mapv_inplace(|x| fmt.quantize(x));
        }
        w
    }

    pub fn forward_bias(&self, layer: usize) -> Array1<f64> {
        let b = &self.layers[layer].bias;
        match self.quant {
            Some(fmt) => b.mapv(|x| fmt.quantize(x)),
            None => b.clone(),
        }
    }

    /// Sum of `|w ⊙ mask|` over all layers.
    pub fn l1_norm(&self) -> f64 {
        self.layers.iter().map(|l| l.masked_weights().iter().map(|w| w.abs()).sum::<f64>()).sum()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<(), NetError> {
        if x.ncols() != self.input_dim() {
            return Err(NetError::InputDim { expected: self.input_dim(), found: x.ncols() });
        }
        Ok(())
    }

    /// Logits for a batch. In [`Mode::Train`] batch norm uses batch
    /// statistics; running statistics are not updated.
    pub fn forward(&self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>, NetError> {
        self.check_input(x)?;
        Ok(self.forward_cached(x, mode, None::<&mut ChaCha8Rng>).0)
    }

    fn forward_cached<R: Rng>(
        &self,
        x: &Array2<f64>,
        mode: Mode,
        mut dropout_rng: Option<&mut R>,
    ) -> (Array2<f64>, Vec<LayerCache>) {
        let mut a = match &self.input_norm {
            Some(norm) => norm.transform(x),
            None => x.clone(),
        };
        let last = self.layers.len() - 1;
        let mut caches = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let w_used = self.forward_weights(l);
            let z = a.dot(&w_used) + &self.forward_bias(l);
            if l == last {
                caches.push(LayerCache {
                    input: a,
                    w_used,
                    bn: None,
                    pre_act: Array2::zeros((0, 0)),
                    post_act: Array2::zeros((0, 0)),
                    dropout: None,
                });
                a = z;
                break;
            }
            let (pre_act, bn_cache) = match (&layer.bn, mode) {
                (Some(bn), Mode::Train) => {
                    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                    let centered = &z - &mean;
                    let var = centered.mapv(|c| c * c).mean_axis(Axis(0)).expect("non-empty batch");
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
                    let xhat = &centered * &inv_std;
                    let y = &xhat * &bn.gamma + &bn.beta;
                    (y, Some(BnCache { xhat, inv_std, mean, var }))
                }
                (Some(bn), Mode::Eval) => {
                    let inv_std = bn.running_var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
                    let y = (&z - &bn.running_mean) * &inv_std * &bn.gamma + &bn.beta;
                    (y, None)
                }
                (None, _) => (z, None),
            };
            let act = layer.activation;
            let post_act = pre_act.mapv(|y| activate(act, y));
            let mut out = match self.quant {
                Some(fmt) => post_act.mapv(|h| fmt.quantize(h)),
                None => post_act.clone(),
            };
            let dropout = match (mode, dropout_rng.as_deref_mut()) {
                (Mode::Train, Some(rng)) if self.dropout_rate > 0.0 => {
                    let keep = 1.0 - self.dropout_rate;
                    let m = Array2::from_shape_fn(out.dim(), |_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    out *= &m;
                    Some(m)
                }
                _ => None,
            };
            caches.push(LayerCache { input: a, w_used, bn: bn_cache, pre_act, post_act, dropout });
            a = out;
        }
        (a, caches)
    }

    /// Data loss (mean over the batch) and its gradient w.r.t. the logits.
    fn data_loss(&self, logits: &Array2<f64>, targets: Targets<'_>) -> Result<(f64, Array2<f64>), NetError> {
        let b = logits.nrows() as f64;
        match (self.loss, targets) {
            (LossKind::SoftmaxCrossEntropy, Targets::Classes(labels)) => {
                let mut grad = Array2::zeros(logits.dim());
                let mut loss = 0.0;
                for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
                    if y >= row.len() {
                        return Err(NetError::TargetKind(self.loss));
                    }
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                    let log_sum = sum.ln() + max;
                    loss += log_sum - row[y];
                    for (j, gj) in g.iter_mut().enumerate() {
                        *gj = ((row[j] - log_sum).exp() - if j == y { 1.0 } else { 0.0 }) / b;
                    }
                }
                Ok((loss / b, grad))
            }
            (LossKind::BinaryCrossEntropyWithLogits, Targets::Classes(labels)) => {
                if logits.ncols() != 1 {
                    return Err(NetError::TargetKind(self.loss));
                }
                let mut grad = Array2::zeros(logits.dim());
                let mut loss = 0.0;
                for (i, &y) in labels.iter().enumerate() {
                    if y > 1 {
                        return Err(NetError::TargetKind(self.loss));
                    }
                    let z = logits[[i, 0]];
                    let t = y as f64;
                    loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
                    grad[[i, 0]] = (sigmoid(z) - t) / b;
                }
                Ok((loss / b, grad))
            }
            (LossKind::MeanSquaredError, Targets::Values(values)) => {
                if values.dim() != logits.dim() {
                    return Err(NetError::TargetKind(self.loss));
                }
                let diff = logits - values;
                let n = diff.len() as f64;
                let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
                Ok((loss, diff * (2.0 / n)))
            }
            _ => Err(NetError::TargetKind(self.loss)),
        }
    }

    /// Total loss (data + L1) in training mode without dropout.
    pub fn loss_value(&self, x: &Array2<f64>, targets: Targets<'_>) -> Result<f64, NetError> {
        self.check_input(x)?;
        if targets.len() != x.nrows() {
            return Err(NetError::TargetCount(targets.len(), x.nrows()));
        }
        let (logits, _) = self.forward_cached(x, Mode::Train, None::<&mut ChaCha8Rng>);
        Ok(self.data_loss(&logits, targets)?.0 + self.l1_lambda * self.l1_norm())
    }

    /// Backpropagated gradients in training mode without dropout.
    ///
    /// Masked weights get zero gradient. With a fixed-point format attached
    /// the straight-through estimator passes gradients only where the
    /// unquantized value lies inside the representable range.
    pub fn gradients(&self, x: &Array2<f64>, targets: Targets<'_>) -> Result<Gradients, NetError> {
        Ok(self.backprop(x, targets, None::<&mut ChaCha8Rng>)?.0)
    }

    pub(crate) fn backprop<R: Rng>(
        &self,
        x: &Array2<f64>,
        targets: Targets<'_>,
        dropout_rng: Option<&mut R>,
    ) -> Result<(Gradients, BatchStats), NetError> {
        self.check_input(x)?;
        if targets.len() != x.nrows() {
            return Err(NetError::TargetCount(targets.len(), x.nrows()));
        }
        let (logits, caches) = self.forward_cached(x, Mode::Train, dropout_rng);
        let (data_loss, mut delta) = self.data_loss(&logits, targets)?;
        let last = self.layers.len() - 1;
        let batch = x.nrows() as f64;
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        for (l, (layer, cache)) in self.layers.iter().zip(&caches).enumerate().rev() {
            let mut gamma_grad = None;
            let mut beta_grad = None;
            let dz = if l == last {
                delta
            } else {
                let mut g = delta;
                if let Some(m) = &cache.dropout {
                    g *= m;
                }
                if let Some(fmt) = self.quant {
                    Zip::from(&mut g).and(&cache.post_act).for_each(|g, &h| {
                        if !fmt.in_range(h) {
                            *g = 0.0;
                        }
                    });
                }
                let act = layer.activation;
                Zip::from(&mut g).and(&cache.pre_act).for_each(|g, &y| *g *= activation_slope(act, y));
                match (&layer.bn, &cache.bn) {
                    (Some(bn), Some(bc)) => {
                        gamma_grad = Some((&g * &bc.xhat).sum_axis(Axis(0)));
                        beta_grad = Some(g.sum_axis(Axis(0)));
                        let dxhat = &g * &bn.gamma;
                        let sum_dxhat = dxhat.sum_axis(Axis(0));
                        let sum_dxhat_xhat = (&dxhat * &bc.xhat).sum_axis(Axis(0));
                        let inner = &dxhat * batch - &sum_dxhat - &(&bc.xhat * &sum_dxhat_xhat);
                        inner * &(&bc.inv_std / batch)
                    }
                    _ => g,
                }
            };
            let mut dw = cache.input.t().dot(&dz);
            let mut db = dz.sum_axis(Axis(0));
            delta = dz.dot(&cache.w_used.t());
            let quant = self.quant;
            Zip::from(&mut dw).and(&layer.weights).and(&layer.mask).for_each(|g, &w, &m| {
                if !m {
                    *g = 0.0;
                    return;
                }
                if let Some(fmt) = quant {
                    if !fmt.in_range(w) {
                        *g = 0.0;
                    }
                }
                *g += self.l1_lambda * sign(w);
            });
            if let Some(fmt) = quant {
                Zip::from(&mut db).and(&layer.bias).for_each(|g, &b| {
                    if !fmt.in_range(b) {
                        *g = 0.0;
                    }
                });
            }
            grads.push(LayerGrad { weights: dw, bias: db, gamma: gamma_grad, beta: beta_grad });
        }
        grads.reverse();
        let stats = caches.into_iter().map(|c| c.bn.map(|b| (b.mean, b.var))).collect();
        Ok((Gradients { loss: data_loss + self.l1_lambda * self.l1_norm(), layers: grads }, stats))
    }

    /// Fold batch statistics into the running estimates.
    pub(crate) fn apply_batch_stats(&mut self, stats: BatchStats) {
        for (layer, s) in self.layers.iter_mut().zip(stats) {
            if let (Some(bn), Some((mean, var))) = (layer.bn.as_mut(), s) {
                bn.running_mean = &bn.running_mean * BN_MOMENTUM + &(mean * (1.0 - BN_MOMENTUM));
                bn.running_var = &bn.running_var * BN_MOMENTUM + &(var * (1.0 - BN_MOMENTUM));
            }
        }
    }

    /// Zero every masked weight.
    pub fn apply_masks(&mut self) {
        for layer in &mut self.layers {
            Zip::from(&mut layer.weights).and(&layer.mask).for_each(|w, &m| {
                if !m {
                    *w = 0.0;
                }
            });
        }
    }

    pub fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams { weights: l.weights.clone(), bias: l.bias.clone(), bn: l.bn.clone() })
                .collect(),
        }
    }

    /// Copy parameters back from a snapshot. Masks are left untouched.
    pub fn restore(&mut self, snap: &WeightSnapshot) -> Result<(), NetError> {
        self.check_snapshot(snap)?;
        for (layer, p) in self.layers.iter_mut().zip(&snap.layers) {
            layer.weights.assign(&p.weights);
            layer.bias.assign(&p.bias);
            layer.bn = p.bn.clone();
        }
        Ok(())
    }

    pub(crate) fn check_snapshot(&self, snap: &WeightSnapshot) -> Result<(), NetError> {
        if snap.layers.len() != self.layers.len() {
            return Err(NetError::Shape(format!(
                "snapshot has {} layers, network {}",
                snap.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, p)) in self.layers.iter().zip(&snap.layers).enumerate() {
            let bn_ok = match (&layer.bn, &p.bn) {
                (Some(a), Some(b)) => a.gamma.len() == b.gamma.len(),
                (None, None) => true,
                _ => false,
            };
            if p.weights.dim() != layer.weights.dim() || p.bias.len() != layer.bias.len() || !bn_ok {
                return Err(NetError::Shape(format!("layer {i} differs from snapshot")));
            }
        }
        Ok(())
    }

    pub fn masks(&self) -> Vec<Array2<bool>> {
        self.layers.iter().map(|l| l.mask.clone()).collect()
    }

    pub fn set_masks(&mut self, masks: &[Array2<bool>]) -> Result<(), NetError> {
        if masks.len() != self.layers.len()
            || masks.iter().zip(&self.layers).any(|(m, l)| m.dim() != l.weights.dim())
        {
            return Err(NetError::Shape("mask shapes differ from network".into()));
        }
        for (layer, m) in self.layers.iter_mut().zip(masks) {
            layer.mask.assign(m);
        }
        Ok(())
    }

    /// Every trainable scalar, in layer order.
    pub fn param_refs(&self) -> Vec<ParamRef> {
        let mut out = Vec::new();
        for (layer, l) in self.layers.iter().enumerate() {
            for ((row, col), _) in l.weights.indexed_iter() {
                out.push(ParamRef::Weight { layer, row, col });
            }
            for unit in 0..l.bias.len() {
                out.push(ParamRef::Bias { layer, unit });
            }
            if l.bn.is_some() {
                for unit in 0..l.fan_out() {
                    out.push(ParamRef::Gamma { layer, unit });
                    out.push(ParamRef::Beta { layer, unit });
                }
            }
        }
        out
    }

    pub fn param(&self, p: ParamRef) -> f64 {
        match p {
            ParamRef::Weight { layer, row, col } => self.layers[layer].weights[[row, col]],
            ParamRef::Bias { layer, unit } => self.layers[layer].bias[unit],
            ParamRef::Gamma { layer, unit } => self.layers[layer].bn.as_ref().expect("bn").gamma[unit],
            ParamRef::Beta { layer, unit } => self.layers[layer].bn.as_ref().expect("bn").beta[unit],
        }
    }

    pub fn set_param(&mut self, p: ParamRef, v: f64) {
        match p {
            ParamRef::Weight { layer, row, col } => self.layers[layer].weights[[row, col]] = v,
            ParamRef::Bias { layer, unit } => self.layers[layer].bias[unit] = v,
            ParamRef::Gamma { layer, unit } => self.layers[layer].bn.as_mut().expect("bn").gamma[unit] = v,
            ParamRef::Beta { layer, unit } => self.layers[layer].bn.as_mut().expect("bn").beta[unit] = v,
        }
    }
}

impl Gradients {
    pub fn get(&self, p: ParamRef) -> f64 {
        match p {
            ParamRef::Weight { layer, row, col } => self.layers[layer].weights[[row, col]],
            ParamRef::Bias { layer, unit } => self.layers[layer].bias[unit],
            ParamRef::Gamma { layer, unit } => self.layers[layer].gamma.as_ref().expect("bn")[unit],
            ParamRef::Beta { layer, unit } => self.layers[layer].beta.as_ref().expect("bn")[unit],
        }
    }
}
