//! YAML experiment definition.
//!
//! Top-level keys: `study`, `dataset`, `space`, `objectives`, `hls`,
//! `local_search`, `runtime`. Unknown keys anywhere are errors. See
//! `docs/config.md` for the full schema.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::is_known_param;
use crate::compress::LocalSearchSchedule;
use crate::cost::{BoardCapacity, BoardRef, HlsConfig, IoType, Strategy};
use crate::data::{gen_iq_readout, gen_jet_like, load_csv, DataError, DatasetTable, WindowSpec};
use crate::derive_seed;
use crate::fixed::FixedPointFormat;
use crate::search::{Direction, ObjectiveSpec};
use crate::space::SearchSpace;

/// Metrics a trial can report, by objective name.
pub const KNOWN_METRICS: [&str; 9] = [
    "accuracy",
    "fidelity",
    "bops",
    "mean_utilization",
    "latency_cycles",
    "lut_pct",
    "ff_pct",
    "dsp_pct",
    "bram_pct",
];

/// Metrics computed on the validation split.
pub const QUALITY_METRICS: [&str; 2] = ["accuracy", "fidelity"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("YAML error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("missing required key `{key}`{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    MissingKey { key: String, line: Option<usize> },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub name: String,
    /// Store directory; relative paths resolve against the working directory.
    #[serde(default = "d_store")]
    pub store: String,
    #[serde(default)]
    pub seed: u64,
}

fn d_store() -> String {
    "study_store".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian-mixture stand-in for jet tagging.
    Jet {
        n: usize,
        #[serde(default = "d_dims")]
        dims: usize,
        #[serde(default = "d_classes")]
        classes: usize,
        #[serde(default = "d_separation")]
        separation: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Synthetic I/Q readout traces.
    Qubit {
        n: usize,
        series_length: usize,
        informative_start: usize,
        informative_size: usize,
        #[serde(default = "d_snr")]
        snr: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Csv {
        path: String,
        #[serde(default = "d_label")]
        label_column: String,
        #[serde(default = "d_true")]
        has_header: bool,
    },
}

fn d_dims() -> usize {
    16
}
fn d_classes() -> usize {
    5
}
fn d_separation() -> f64 {
    2.0
}
fn d_snr() -> f64 {
    0.5
}
fn d_label() -> String {
    "label".into()
}
fn d_true() -> bool {
    true
}

impl DatasetConfig {
    /// Materialize the table. Generator seeds default to a value derived
    /// from the study seed; CSV paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path, study_seed: u64) -> Result<DatasetTable, DataError> {
        let fallback = derive_seed(study_seed, 0xDA7A);
        match self {
            DatasetConfig::Jet { n, dims, classes, separation, seed } => {
                gen_jet_like(*n, *dims, *classes, *separation, seed.unwrap_or(fallback))
            }
            DatasetConfig::Qubit { n, series_length, informative_start, informative_size, snr, seed } => gen_iq_readout(
                *n,
                *series_length,
                WindowSpec { start: *informative_start, size: *informative_size },
                *snr,
                seed.unwrap_or(fallback),
            ),
            DatasetConfig::Csv { path, label_column, has_header } => {
                let p = Path::new(path);
                let p = if p.is_relative() { base_dir.join(p) } else { p.to_path_buf() };
                let mut table = load_csv(&p, label_column, *has_header)?;
                if let Some(schema) = crate::data::DatasetSchema::read(&p)? {
                    table.series_length = schema.series_length;
                }
                Ok(table)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Learned regressors (trained on first use if no model file exists).
    #[default]
    Surrogate,
    /// The analytic estimate directly.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HlsSection {
    pub board: BoardRef,
    #[serde(default = "d_strategy")]
    pub strategy: Strategy,
    #[serde(default = "d_io")]
    pub io_type: IoType,
    #[serde(default = "d_reuse")]
    pub reuse_factor: u32,
    #[serde(default = "crate::cost::default_precision")]
    pub default_precision: FixedPointFormat,
    #[serde(default)]
    pub estimator: Estimator,
    /// Surrogate model file; defaults to `surrogate.json` inside the store.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate_path: Option<String>,
}

fn d_strategy() -> Strategy {
    Strategy::Latency
}
fn d_io() -> IoType {
    IoType::Parallel
}
fn d_reuse() -> u32 {
    1
}

impl HlsSection {
    pub fn hls_config(&self) -> HlsConfig {
        HlsConfig {
            board: self.board.clone(),
            strategy: self.strategy,
            io_type: self.io_type,
            reuse_factor: self.reuse_factor,
            default_precision: self.default_precision,
        }
    }

    pub fn board(&self) -> Result<BoardCapacity, ConfigError> {
        self.board.resolve().map_err(|e| ConfigError::Validation(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSection {
    #[serde(default = "d_budget")]
    pub trial_budget: usize,
    #[serde(default = "d_pop")]
    pub population_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs_per_trial: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_folds")]
    pub k_folds: usize,
    /// Per-gene mutation probability; `1 / number of genes` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_prob: Option<f64>,
    #[serde(default = "d_surrogate_samples")]
    pub surrogate_samples: usize,
    /// RUNNING claims older than this many seconds no longer count against
    /// the budget. Unset means they always count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stale_after_secs: Option<u64>,
    #[serde(default = "d_failures")]
    pub max_consecutive_failures: usize,
}

fn d_budget() -> usize {
    500
}
fn d_pop() -> usize {
    20
}
fn d_epochs() -> usize {
    5
}
fn d_batch() -> usize {
    128
}
fn d_folds() -> usize {
    3
}
fn d_surrogate_samples() -> usize {
    2000
}
fn d_failures() -> usize {
    25
}

impl Default for RuntimeSection {
    fn default() -> Self {
        Self {
            trial_budget: d_budget(),
            population_size: d_pop(),
            epochs_per_trial: d_epochs(),
            batch_size: d_batch(),
            k_folds: d_folds(),
            mutation_prob: None,
            surrogate_samples: d_surrogate_samples(),
            stale_after_secs: None,
            max_consecutive_failures: d_failures(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: StudySection,
    pub dataset: DatasetConfig,
    pub space: SearchSpace,
    pub objectives: Vec<ObjectiveSpec>,
    pub hls: HlsSection,
    #[serde(default)]
    pub local_search: LocalSearchSchedule,
    #[serde(default)]
    pub runtime: RuntimeSection,
}

fn missing_key(message: &str) -> Option<String> {
    let rest = message.split("missing field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

/// Parse and validate a config document.
pub fn parse_config(yaml_text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = serde_yaml::from_str(yaml_text).map_err(|e| {
        let line = e.location().map(|l| l.line());
        let message = e.to_string();
        match missing_key(&message) {
            Some(key) => ConfigError::MissingKey { key, line },
            None => ConfigError::Parse { line, message },
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    /// Name of the validation-quality objective.
    pub fn quality_metric(&self) -> &str {
        self.objectives
            .iter()
            .find(|o| QUALITY_METRICS.contains(&o.name.as_str()))
            .map(|o| o.name.as_str())
            .expect("validated config has a quality objective")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Validation(m));
        if self.study.name.trim().is_empty() {
            return bad("study.name is empty".into());
        }
        self.space.validate().map_err(|e| ConfigError::Validation(format!("space: {e}")))?;
        for p in &self.space.params {
            if !is_known_param(&p.name) {
                return bad(format!("space: unknown parameter `{}`", p.name));
            }
        }
        if self.objectives.is_empty() {
            return bad("objectives list is empty".into());
        }
        let mut seen = BTreeSet::new();
        for o in &self.objectives {
            if !KNOWN_METRICS.contains(&o.name.as_str()) {
                return bad(format!("unknown objective metric `{}` (known: {})", o.name, KNOWN_METRICS.join(", ")));
            }
            if !seen.insert(o.name.as_str()) {
                return bad(format!("objective `{}` listed twice", o.name));
            }
            let quality = QUALITY_METRICS.contains(&o.name.as_str());
            if quality != (o.direction == Direction::Maximize) {
                return bad(format!("objective `{}` has the wrong direction", o.name));
            }
        }
        let n_quality = self.objectives.iter().filter(|o| QUALITY_METRICS.contains(&o.name.as_str())).count();
        if n_quality != 1 {
            return bad("exactly one of accuracy or fidelity must be an objective".into());
        }
        let r = &self.runtime;
        if r.population_size == 0 {
            return bad("runtime.population_size must be >= 1".into());
        }
        if r.population_size > r.trial_budget {
            return bad(format!(
                "runtime.population_size ({}) exceeds runtime.trial_budget ({})",
                r.population_size, r.trial_budget
            ));
        }
        if r.k_folds == 0 {
            return bad("runtime.k_folds must be >= 1".into());
        }
        if r.batch_size == 0 {
            return bad("runtime.batch_size must be >= 1".into());
        }
        if r.epochs_per_trial == 0 {
            return bad("runtime.epochs_per_trial must be >= 1".into());
        }
        if r.max_consecutive_failures == 0 {
            return bad("runtime.max_consecutive_failures must be >= 1".into());
        }
        if let Some(p) = r.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("runtime.mutation_prob {p} is outside [0, 1]"));
            }
        }
        if self.hls.reuse_factor == 0 {
            return bad("hls.reuse_factor must be >= 1".into());
        }
        self.hls.board()?;
        self.local_search.validate().map_err(|e| ConfigError::Validation(format!("local_search: {e}")))?;
        Ok(())
    }
}
