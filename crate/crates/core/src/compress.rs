//! Local search: quantization-aware training combined with iterative
//! layerwise magnitude pruning and rewinding to post-warmup weights.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::effective_bops;
use crate::data::{DatasetTable, Split};
use crate::derive_seed;
use crate::fixed::FixedPointFormat;
use crate::nn::{evaluate, fit, Metric, NetError, Network, NetworkFile, Targets, TrainConfig, TrainError, WeightSnapshot};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("iterations must be >= 1")]
    Iterations,
    #[error("pruning rate {0} outside (0, 1)")]
    Rate(f64),
    #[error("precision list is empty")]
    NoPrecisions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSearchSchedule {
    #[serde(default = "d_qat")]
    pub qat_epochs: usize,
    #[serde(default = "d_iters")]
    pub iterations: usize,
    #[serde(default = "d_epi")]
    pub epochs_per_iteration: usize,
    #[serde(default = "d_rate")]
    pub pruning_rate: f64,
    #[serde(default = "d_precisions")]
    pub precisions: Vec<FixedPointFormat>,
}

fn d_qat() -> usize {
    5
}
fn d_iters() -> usize {
    10
}
fn d_epi() -> usize {
    10
}
fn d_rate() -> f64 {
    0.2
}
fn d_precisions() -> Vec<FixedPointFormat> {
    [(32, 16), (16, 6), (8, 3), (4, 1)].iter().map(|&(t, i)| FixedPointFormat::new(t, i).expect("valid")).collect()
}

impl Default for LocalSearchSchedule {
    fn default() -> Self {
        Self {
            qat_epochs: d_qat(),
            iterations: d_iters(),
            epochs_per_iteration: d_epi(),
            pruning_rate: d_rate(),
            precisions: d_precisions(),
        }
    }
}

impl LocalSearchSchedule {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.iterations == 0 {
            return Err(ScheduleError::Iterations);
        }
        if !(self.pruning_rate > 0.0 && self.pruning_rate < 1.0) {
            return Err(ScheduleError::Rate(self.pruning_rate));
        }
        if self.precisions.is_empty() {
            return Err(ScheduleError::NoPrecisions);
        }
        Ok(())
    }
}

/// Quantize weights, biases and hidden activations to `fmt` from now on.
pub fn attach_qat(net: &mut Network, fmt: FixedPointFormat) {
    net.quant = Some(fmt);
}

/// Mask `⌊rate · unmasked⌋` of the smallest-magnitude unmasked weights in
/// every layer, lower row-major index first among equal magnitudes.
/// Returns the number masked per layer.
pub fn prune_step(net: &mut Network, rate: f64) -> Vec<usize> {
    assert!(rate > 0.0 && rate < 1.0, "pruning rate {rate} outside (0, 1)");
    net.layers
        .iter_mut()
        .map(|layer| {
            let cols = layer.fan_out();
            let mut alive: Vec<(usize, f64)> = layer
                .mask
                .iter()
                .zip(layer.weights.iter())
                .enumerate()
                .filter(|(_, (&m, _))| m)
                .map(|(i, (_, &w))| (i, w.abs()))
                .collect();
            let k = (rate * alive.len() as f64).floor() as usize;
            alive.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            for &(i, _) in &alive[..k] {
                layer.mask[[i / cols, i % cols]] = false;
                layer.weights[[i / cols, i % cols]] = 0.0;
            }
            k
        })
        .collect()
}

/// Reset parameters to `snap` and apply `masks`: survivors take their
/// snapshot values, masked weights become exactly zero, biases and batch
/// norm come back from the snapshot.
pub fn rewind(net: &mut Network, snap: &WeightSnapshot, masks: &[ndarray::Array2<bool>]) -> Result<(), NetError> {
    net.check_snapshot(snap)?;
    net.set_masks(masks)?;
    net.restore(snap)?;
    net.apply_masks();
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    pub per_layer: Vec<f64>,
    /// Unmasked fraction over all weights.
    pub global: f64,
}

pub fn sparsity(net: &Network) -> Sparsity {
    let per_layer = net.layers.iter().map(|l| l.density()).collect();
    let total: usize = net.layers.iter().map(|l| l.mask.len()).sum();
    let alive: usize = net.layers.iter().map(|l| l.unmasked()).sum();
    Sparsity { per_layer, global: alive as f64 / total as f64 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    /// 1-based.
    pub iteration: usize,
    pub global_density: f64,
    pub effective_bops: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionResult {
    pub precision: FixedPointFormat,
    pub best_iteration: usize,
    pub best_metric: f64,
    /// Best trained weights and masks (first fold).
    pub best_network: NetworkFile,
    pub log: Vec<IterationLog>,
}

impl CompressionResult {
    pub fn network(&self) -> Result<Network, NetError> {
        Network::try_from(self.best_network.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string(self).expect("result serializes"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }
}

/// Optimizer settings shared by warmup and per-iteration retraining.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Bit width for BOPs of float networks.
    pub default_precision: FixedPointFormat,
}

/// Completed precisions, plus the error that stopped the run early.
#[derive(Debug)]
pub struct LocalSearchOutcome {
    pub results: Vec<CompressionResult>,
    pub error: Option<TrainError>,
}

struct FoldData {
    train: DatasetTable,
    val: DatasetTable,
}

fn train_fold(net: &mut Network, fold: &FoldData, epochs: usize, cfg: &LocalTrainConfig, seed: u64) -> Result<(), TrainError> {
    if epochs == 0 {
        return Ok(());
    }
    let tc = TrainConfig { standardize: false, ..TrainConfig::new(epochs, cfg.batch_size, cfg.learning_rate, seed) };
    fit(net, &fold.train.features, Targets::Classes(&fold.train.labels), &tc)?;
    Ok(())
}

fn run_precision(
    seeds: &[Network],
    folds: &[FoldData],
    fmt: FixedPointFormat,
    p_index: usize,
    schedule: &LocalSearchSchedule,
    cfg: &LocalTrainConfig,
) -> Result<CompressionResult, TrainError> {
    let base = derive_seed(cfg.seed, p_index as u64);
    let mut nets: Vec<Network> = seeds.to_vec();
    let mut snaps = Vec::with_capacity(nets.len());
    for (f, (net, fold)) in nets.iter_mut().zip(folds).enumerate() {
        attach_qat(net, fmt);
        train_fold(net, fold, schedule.qat_epochs, cfg, derive_seed(base, f as u64))?;
        snaps.push(net.snapshot());
    }
    let mut log = Vec::with_capacity(schedule.iterations);
    let mut best: Option<(usize, f64, Network)> = None;
    let n = nets.len() as f64;
    for it in 1..=schedule.iterations {
        let (mut density, mut bops, mut metric) = (0.0, 0.0, 0.0);
        for (f, (net, fold)) in nets.iter_mut().zip(folds).enumerate() {
            prune_step(net, schedule.pruning_rate);
            let seed = derive_seed(derive_seed(base, f as u64), it as u64);
            train_fold(net, fold, schedule.epochs_per_iteration, cfg, seed)?;
            density += sparsity(net).global / n;
            bops += effective_bops(net, cfg.default_precision) / n;
            metric += evaluate(net, &fold.val, Metric::Accuracy)? / n;
        }
        if best.as_ref().is_none_or(|b| metric > b.1) {
            best = Some((it, metric, nets[0].clone()));
        }
        log.push(IterationLog { iteration: it, global_density: density, effective_bops: bops, val_metric: metric });
        for (net, snap) in nets.iter_mut().zip(&snaps) {
            let masks = net.masks();
            rewind(net, snap, &masks)?;
        }
    }
    let (best_iteration, best_metric, best_net) = best.expect("at least one iteration");
    Ok(CompressionResult {
        precision: fmt,
        best_iteration,
        best_metric,
        best_network: NetworkFile::from(&best_net),
        log,
    })
}

/// Run the schedule for every precision. `seeds[i]` is the trained model
/// for `splits[i]`; metrics are averaged over splits and the checkpointed
/// network comes from the first split.
pub fn local_search(
    seeds: &[Network],
    schedule: &LocalSearchSchedule,
    data: &DatasetTable,
    splits: &[Split],
    cfg: &LocalTrainConfig,
) -> LocalSearchOutcome {
    assert_eq!(seeds.len(), splits.len(), "one seed network per split");
    assert!(!seeds.is_empty(), "at least one split");
    let folds: Vec<FoldData> =
        splits.iter().map(|s| FoldData { train: data.subset(&s.train), val: data.subset(&s.val) }).collect();
    let mut results = Vec::new();
    for (p, &fmt) in schedule.precisions.iter().enumerate() {
        match run_precision(seeds, &folds, fmt, p, schedule, cfg) {
            Ok(r) => {
                log::info!("{fmt}: best metric {:.4} at iteration {}", r.best_metric, r.best_iteration);
                results.push(r);
            }
            Err(e) => return LocalSearchOutcome { results, error: Some(e) },
        }
    }
    LocalSearchOutcome { results, error: None }
}

/// Iteration log as CSV: precision, iteration, global_density,
/// effective_bops, val_metric.
pub fn write_log_csv(results: &[CompressionResult], path: impl AsRef<Path>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["precision", "iteration", "global_density", "effective_bops", "val_metric"])?;
    for r in results {
        for row in &r.log {
            w.write_record([
                r.precision.to_string(),
                row.iteration.to_string(),
                row.global_density.to_string(),
                row.effective_bops.to_string(),
                row.val_metric.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
