//! Selected-trial checkpoint handed from global to local search.

use std::collections::BTreeMap;
use std::path::Path;

use hwnas_core::arch::{decode_architecture, ArchitectureSpec};
use hwnas_core::search::{ObjectiveSpec, SelectionRule};
use hwnas_core::space::{ParamAssignment, SearchSpace};
use hwnas_core::store::TrialRecord;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CHECKPOINT_FORMAT: &str = "hwnas-checkpoint";
pub const CHECKPOINT_FILE: &str = "best_model_for_local_search.yaml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub study: String,
    pub trial_id: u64,
    pub space_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionRule>,
    pub params: ParamAssignment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<ArchitectureSpec>,
    /// Objectives (study order) as name/value pairs.
    pub objectives: Vec<(String, f64)>,
    /// Every other recorded metric.
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl Checkpoint {
    pub fn from_trial(
        study: &str,
        space_digest: &str,
        trial: &TrialRecord,
        specs: &[ObjectiveSpec],
        space: Option<&SearchSpace>,
        selection: Option<SelectionRule>,
    ) -> Self {
        let objectives = specs
            .iter()
            .zip(trial.objectives.iter().flatten())
            .map(|(s, &v)| (s.name.clone(), v))
            .collect();
        let architecture = space.and_then(|s| decode_architecture(&trial.params, s).ok());
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            study: study.into(),
            trial_id: trial.trial_id,
            space_digest: space_digest.into(),
            selection,
            params: trial.params.clone(),
            architecture,
            objectives,
            metrics: trial.aux.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_yaml::to_string(self).expect("checkpoint serializes");
        crate::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let c: Checkpoint =
            serde_yaml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(CliError::Validation(format!("{}: not a checkpoint file", path.display())));
        }
        Ok(c)
    }
}
