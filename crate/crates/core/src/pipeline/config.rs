use super::{io_err, PipelineError};
use crate::sim::{CleanRules, SimConfig};
use crate::trees::BoostParams;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Template,
    /// Endpoint, model and key come from the environment.
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Suggestion library; the bundled one when absent.
    pub library: Option<PathBuf>,
    /// Analogy table; the bundled one when absent.
    pub analogies: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub permutation: bool,
    pub permutation_replicates: usize,
    pub panel_fe: bool,
    pub hte: bool,
    pub hte_folds: usize,
    pub forest_trees: usize,
    pub archetypes: bool,
    pub text: bool,
    /// Keyword dictionaries; the bundled ones when absent.
    pub dictionaries: Option<PathBuf>,
    pub predictors: bool,
    pub boost: BoostParams,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            permutation: true,
            permutation_replicates: 3000,
            panel_fe: true,
            hte: true,
            hte_folds: 5,
            forest_trees: 200,
            archetypes: true,
            text: true,
            dictionaries: None,
            predictors: true,
            boost: BoostParams::default(),
        }
    }
}

/// Everything a run needs besides its input files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub sim: SimConfig,
    pub cleaning: CleanRules,
    pub backend: BackendConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Validation(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> Result<u64, PipelineError> {
        self.seed.ok_or_else(|| PipelineError::Validation("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.seed()?;
        self.sim.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        let c = &self.cleaning;
        if !(c.iqr_k > 0.0) {
            return Err(PipelineError::Validation("cleaning.iqr_k must be positive".into()));
        }
        if !(0.0..=1.0).contains(&c.max_missing_fraction) {
            return Err(PipelineError::Validation("cleaning.max_missing_fraction must lie in [0, 1]".into()));
        }
        let a = &self.analysis;
        if a.permutation_replicates == 0 || a.forest_trees == 0 || a.boost.trees == 0 {
            return Err(PipelineError::Validation("replicate and tree counts must be positive".into()));
        }
        if a.hte_folds < 2 {
            return Err(PipelineError::Validation("analysis.hte_folds must be at least 2".into()));
        }
        if !(a.boost.learning_rate > 0.0 && a.boost.learning_rate <= 1.0) {
            return Err(PipelineError::Validation("analysis.boost.learning_rate must lie in (0, 1]".into()));
        }
        Ok(())
    }
}
