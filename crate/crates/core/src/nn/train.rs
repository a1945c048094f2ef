//! Mini-batch Adam training, fold-aware training driver and evaluation.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Gradients, LayerGrad, LossKind, NetError, Network, Targets};
use crate::data::{holdout_split, DataError, DatasetTable, FoldPlan, Split, Standardizer};
use crate::derive_seed;

/// Share of each class held out when no fold plan is given.
pub const HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss in epoch {epoch} (fold {fold})")]
    NonFinite { epoch: usize, fold: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid training setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    /// Binary assignment accuracy; computed the same way as accuracy.
    Fidelity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Fit a standardizer on each training split and attach it to the model.
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, seed: u64) -> Self {
        Self { epochs, batch_size, learning_rate, seed, standardize: true }
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch, averaged over folds.
    pub epoch_losses: Vec<f64>,
    /// Mean validation accuracy over folds.
    pub metric: f64,
    pub fold_metrics: Vec<f64>,
    /// Trained model of every fold, in fold order.
    pub fold_models: Vec<Network>,
}

/// Adam with `β1 = 0.9`, `β2 = 0.999`, `ε = 1e-8`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: i32,
    m: Vec<LayerGrad>,
    v: Vec<LayerGrad>,
}

fn zeros_like(net: &Network) -> Vec<LayerGrad> {
    net.layers
        .iter()
        .map(|l| LayerGrad {
            weights: Array2::zeros(l.weights.dim()),
            bias: Array1::zeros(l.bias.len()),
            gamma: l.bn.as_ref().map(|b| Array1::zeros(b.gamma.len())),
            beta: l.bn.as_ref().map(|b| Array1::zeros(b.beta.len())),
        })
        .collect()
}

fn adam_update<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    (lr, b1, b2, eps, c1, c2): (f64, f64, f64, f64, f64, f64),
) {
    ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    });
}

impl Adam {
    pub fn new(net: &Network, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: zeros_like(net),
            v: zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        self.t += 1;
        let h = (
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.epsilon,
            1.0 - self.beta1.powi(self.t),
            1.0 - self.beta2.powi(self.t),
        );
        for (((layer, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            adam_update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, h);
            adam_update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, h);
            if let Some(bn) = layer.bn.as_mut() {
                let (gg, gb) = (g.gamma.as_ref().expect("bn grad"), g.beta.as_ref().expect("bn grad"));
                adam_update(&mut bn.gamma, gg, m.gamma.as_mut().expect("bn"), v.gamma.as_mut().expect("bn"), h);
                adam_update(&mut bn.beta, gb, m.beta.as_mut().expect("bn"), v.beta.as_mut().expect("bn"), h);
            }
        }
        net.apply_masks();
    }
}

fn select_targets<'a>(targets: Targets<'a>, idx: &[usize], buf: &'a mut (Vec<usize>, Array2<f64>)) -> Targets<'a> {
    match targets {
        Targets::Classes(c) => {
            buf.0 = idx.iter().map(|&i| c[i]).collect();
            Targets::Classes(&buf.0)
        }
        Targets::Values(v) => {
            buf.1 = v.select(Axis(0), idx);
            Targets::Values(&buf.1)
        }
    }
}

/// Train on raw arrays with a fresh optimizer. Returns mean loss per epoch.
///
/// Inputs pass through `net.input_norm` as is; `cfg.standardize` is not
/// consulted here.
pub fn fit(net: &mut Network, x: &Array2<f64>, targets: Targets<'_>, cfg: &TrainConfig) -> Result<Vec<f64>, TrainError> {
    if cfg.batch_size == 0 {
        return Err(TrainError::Setup("batch_size must be >= 1".into()));
    }
    if x.nrows() == 0 {
        return Err(TrainError::Data(DataError::EmptySplit));
    }
    if targets.len() != x.nrows() {
        return Err(NetError::TargetCount(targets.len(), x.nrows()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net, cfg.learning_rate);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut buf = (Vec::new(), Array2::zeros((0, 0)));
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let tb = select_targets(targets, chunk, &mut buf);
            let (grads, stats) = net.backprop(&xb, tb, Some(&mut rng))?;
            if !grads.loss.is_finite() {
                return Err(TrainError::NonFinite { epoch, fold: 0 });
            }
            total += grads.loss * chunk.len() as f64;
            adam.step(net, &grads);
            net.apply_batch_stats(stats);
        }
        losses.push(total / x.nrows() as f64);
    }
    Ok(losses)
}

fn check_arity(net: &Network, data: &DatasetTable) -> Result<(), TrainError> {
    let ok = match net.loss {
        LossKind::BinaryCrossEntropyWithLogits => net.output_dim() == 1 && data.class_count <= 2,
        LossKind::SoftmaxCrossEntropy => net.output_dim() >= data.class_count,
        LossKind::MeanSquaredError => false,
    };
    if ok {
        Ok(())
    } else {
        Err(TrainError::Setup(format!(
            "loss {:?} with {} outputs cannot fit {} classes",
            net.loss,
            net.output_dim(),
            data.class_count
        )))
    }
}

/// Fold splits, or one stratified holdout split when `folds` is `None` or
/// has `k = 1`.
pub fn training_splits(labels: &[usize], folds: Option<&FoldPlan>, seed: u64) -> Vec<Split> {
    match folds {
        Some(plan) if plan.k >= 2 => plan.splits(),
        _ => vec![holdout_split(labels, HOLDOUT_FRACTION, seed)],
    }
}

/// Train copies of `net` on each fold (or on one stratified holdout split
/// when `folds` is `None` or has `k = 1`) and report mean validation
/// accuracy. `net` is replaced by the first fold's trained model.
pub fn train_epochs(
    net: &mut Network,
    data: &DatasetTable,
    folds: Option<&FoldPlan>,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    if data.is_empty() {
        return Err(DataError::EmptySplit.into());
    }
    check_arity(net, data)?;
    let splits = training_splits(&data.labels, folds, cfg.seed);
    let mut fold_models = Vec::with_capacity(splits.len());
    let mut fold_metrics = Vec::with_capacity(splits.len());
    let mut epoch_losses = vec![0.0; cfg.epochs];
    for (i, split) in splits.iter().enumerate() {
        let train = data.subset(&split.train);
        let val = data.subset(&split.val);
        let mut model = net.clone();
        if cfg.standardize {
            model.input_norm = Some(Standardizer::fit(&train.features)?);
        }
        let losses = fit(&mut model, &train.features, Targets::Classes(&train.labels), &cfg.with_seed(derive_seed(cfg.seed, i as u64)))
            .map_err(|e| match e {
                TrainError::NonFinite { epoch, .. } => TrainError::NonFinite { epoch, fold: i },
                other => other,
            })?;
        for (acc, l) in epoch_losses.iter_mut().zip(losses) {
            *acc += l / splits.len() as f64;
        }
        fold_metrics.push(evaluate(&model, &val, Metric::Accuracy)?);
        fold_models.push(model);
    }
    *net = fold_models[0].clone();
    let metric = fold_metrics.iter().sum::<f64>() / fold_metrics.len() as f64;
    Ok(TrainReport { epoch_losses, metric, fold_metrics, fold_models })
}

/// Predicted class per row: `logit > 0` for one output, argmax otherwise
/// (first maximum wins).
pub fn predict_classes(net: &Network, x: &Array2<f64>) -> Result<Vec<usize>, NetError> {
    let logits = net.forward(x, super::Mode::Eval)?;
    Ok(logits
        .rows()
        .into_iter()
        .map(|row| {
            if row.len() == 1 {
                usize::from(row[0] > 0.0)
            } else {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            }
        })
        .collect())
}

/// Fraction of correctly predicted labels.
pub fn evaluate(net: &Network, data: &DatasetTable, _metric: Metric) -> Result<f64, NetError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let pred = predict_classes(net, &data.features)?;
    let correct = pred.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / data.len() as f64)
}
