//! Per-trial evaluation: decode, window, train, score.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hwnas_core::arch::{decode_architecture, ArchitectureSpec};
use hwnas_core::config::{Estimator, ExperimentConfig};
use hwnas_core::cost::{
    estimate_spec, featurize, mean_utilization, oracle_samples, spec_bops, train_surrogate, BoardCapacity, HlsConfig,
    ResourceEstimate, SurrogateModel, SurrogateOptions,
};
use hwnas_core::data::{extract_window, stratified_kfold, DatasetTable, FoldPlan};
use hwnas_core::derive_seed;
use hwnas_core::nn::{train_epochs, Network, TrainConfig, TrainReport};
use hwnas_core::search::Evaluation;
use hwnas_core::space::{ParamAssignment, SearchSpace};

use crate::CliError;

const FOLD_SALT: u64 = 0xF01D;
const SURROGATE_SALT: u64 = 0x5A6E;
pub const SURROGATE_FILE: &str = "surrogate.json";

/// Resource model used to score trials.
#[derive(Debug, Clone)]
pub enum CostModel {
    Oracle,
    Surrogate(Box<SurrogateModel>),
}

impl CostModel {
    pub fn estimate(
        &self,
        spec: &ArchitectureSpec,
        input_dim: usize,
        output_dim: usize,
        hls: &HlsConfig,
        board: &BoardCapacity,
    ) -> Result<ResourceEstimate, String> {
        match self {
            CostModel::Oracle => Ok(estimate_spec(spec, input_dim, output_dim, hls, board)),
            CostModel::Surrogate(m) => {
                m.predict(&featurize(spec, input_dim, output_dim, hls), board).map_err(|e| e.to_string())
            }
        }
    }
}

/// Where the surrogate for a study lives.
pub fn surrogate_path(cfg: &ExperimentConfig, store_dir: &Path, config_dir: &Path) -> PathBuf {
    match &cfg.hls.surrogate_path {
        Some(p) if Path::new(p).is_relative() => config_dir.join(p),
        Some(p) => PathBuf::from(p),
        None => store_dir.join(SURROGATE_FILE),
    }
}

/// Oracle-labeled training set for the study's space.
pub fn surrogate_training_set(
    cfg: &ExperimentConfig,
    data: &DatasetTable,
    n: usize,
    seed: u64,
) -> Result<Vec<(hwnas_core::cost::CostFeatures, ResourceEstimate)>, CliError> {
    let board = cfg.hls.board()?;
    let mut precisions = cfg.local_search.precisions.clone();
    precisions.push(cfg.hls.default_precision);
    oracle_samples(&cfg.space, data.n_features(), data.class_count, &cfg.hls.hls_config(), &board, &precisions, n, seed)
        .map_err(|e| CliError::Validation(format!("space: {e}")))
}

pub fn fit_surrogate(cfg: &ExperimentConfig, data: &DatasetTable) -> Result<SurrogateModel, CliError> {
    let seed = derive_seed(cfg.study.seed, SURROGATE_SALT);
    let samples = surrogate_training_set(cfg, data, cfg.runtime.surrogate_samples, seed)?;
    train_surrogate(&samples, seed, &SurrogateOptions::default()).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Load the study's surrogate, training and saving it first if absent.
pub fn load_or_train_surrogate(
    cfg: &ExperimentConfig,
    data: &DatasetTable,
    path: &Path,
) -> Result<SurrogateModel, CliError> {
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        return SurrogateModel::from_json(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())));
    }
    log::info!("training surrogate on {} oracle samples", cfg.runtime.surrogate_samples);
    let model = fit_surrogate(cfg, data)?;
    crate::write_atomic(path, model.to_json().as_bytes())?;
    Ok(model)
}

pub fn cost_model(cfg: &ExperimentConfig, data: &DatasetTable, store_dir: &Path, config_dir: &Path) -> Result<CostModel, CliError> {
    Ok(match cfg.hls.estimator {
        Estimator::Oracle => CostModel::Oracle,
        Estimator::Surrogate => {
            let path = surrogate_path(cfg, store_dir, config_dir);
            CostModel::Surrogate(Box::new(load_or_train_surrogate(cfg, data, &path)?))
        }
    })
}

/// Everything a worker needs to score a candidate.
pub struct TrialContext {
    pub config: ExperimentConfig,
    pub data: DatasetTable,
    pub folds: Option<FoldPlan>,
    pub hls: HlsConfig,
    pub board: BoardCapacity,
    pub cost: CostModel,
}

/// A trained candidate.
pub struct TrainedTrial {
    pub spec: ArchitectureSpec,
    pub data: DatasetTable,
    pub report: TrainReport,
    pub network: Network,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl TrialContext {
    pub fn new(config: ExperimentConfig, data: DatasetTable, cost: CostModel) -> Result<Self, CliError> {
        let folds = if config.runtime.k_folds >= 2 {
            Some(
                stratified_kfold(&data.labels, config.runtime.k_folds, derive_seed(config.study.seed, FOLD_SALT))
                    .map_err(|e| CliError::Validation(format!("dataset: {e}")))?,
            )
        } else {
            None
        };
        let hls = config.hls.hls_config();
        let board = config.hls.board()?;
        Ok(Self { config, data, folds, hls, board, cost })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.config.space
    }

    pub fn trial_seed(&self, id: u64) -> u64 {
        derive_seed(self.config.study.seed, id)
    }

    /// Decode, window and train a candidate with the seed of trial `id`.
    pub fn train(&self, id: u64, params: &ParamAssignment) -> Result<TrainedTrial, String> {
        let spec = decode_architecture(params, self.space()).map_err(|e| format!("decode: {e}"))?;
        let data = match spec.window {
            Some(w) => extract_window(&self.data, w).map_err(|e| format!("window: {e}"))?,
            None => self.data.clone(),
        };
        let input_dim = data.n_features();
        let output_dim = spec.resolve_output_dim(data.class_count);
        let seed = self.trial_seed(id);
        let mut net = Network::build(&spec, input_dim, output_dim, seed);
        let rt = &self.config.runtime;
        let tc = TrainConfig::new(rt.epochs_per_trial, rt.batch_size, spec.learning_rate, seed);
        let report = train_epochs(&mut net, &data, self.folds.as_ref(), &tc).map_err(|e| format!("training: {e}"))?;
        Ok(TrainedTrial { spec, data, report, network: net, input_dim, output_dim })
    }

    /// All metrics of a candidate by name.
    pub fn metrics(&self, id: u64, params: &ParamAssignment) -> Result<BTreeMap<String, f64>, String> {
        let t = self.train(id, params)?;
        if !t.report.metric.is_finite() {
            return Err("non-finite validation metric".into());
        }
        let bits = self.hls.default_precision.total_bits();
        let est = self.cost.estimate(&t.spec, t.input_dim, t.output_dim, &self.hls, &self.board)?;
        let mut m = BTreeMap::new();
        m.insert(self.config.quality_metric().to_string(), t.report.metric);
        m.insert("bops".into(), spec_bops(&t.spec, t.input_dim, t.output_dim, bits));
        m.insert("mean_utilization".into(), mean_utilization(&est));
        m.insert("latency_cycles".into(), est.latency_cycles);
        m.insert("lut_pct".into(), est.lut_pct);
        m.insert("ff_pct".into(), est.ff_pct);
        m.insert("dsp_pct".into(), est.dsp_pct);
        m.insert("bram_pct".into(), est.bram_pct);
        m.insert("lut".into(), est.lut);
        m.insert("ff".into(), est.ff);
        m.insert("dsp".into(), est.dsp);
        m.insert("bram".into(), est.bram);
        m.insert("ii".into(), est.initiation_interval as f64);
        m.insert("input_dim".into(), t.input_dim as f64);
        Ok(m)
    }

    /// Objectives in study order plus every metric as aux.
    pub fn evaluate(&self, id: u64, params: &ParamAssignment) -> Result<Evaluation, String> {
        let metrics = self.metrics(id, params)?;
        let objectives = self
            .config
            .objectives
            .iter()
            .map(|o| metrics.get(&o.name).copied().ok_or_else(|| format!("metric `{}` not computed", o.name)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Evaluation { objectives, aux: metrics })
    }
}
