use super::{read_file, write_file, Layout, PipelineError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Module names and versions recorded with every run.
pub const MODULES: [&str; 11] = [
    "knowledge_base",
    "profile_store",
    "nudge_agent",
    "trial_sim",
    "stats_core",
    "tree_learners",
    "hte_meta",
    "trajectory_cluster",
    "text_metrics",
    "predictors",
    "cli_report",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Relative path to sha256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Per-analysis outcome: `ok` or `skipped: <reason>`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub status: BTreeMap<String, String>,
}

/// Provenance of a run directory. Contains no timestamps, so identical
/// runs produce byte-identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub version: String,
    pub modules: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&read_file(path)?))
}

impl Manifest {
    pub fn new(seed: u64) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        Manifest {
            seed,
            modules: MODULES.iter().map(|m| (m.to_string(), version.clone())).collect(),
            version,
            stages: BTreeMap::new(),
        }
    }

    /// Existing manifest of the run, or a fresh one.
    pub fn load_or_new(layout: &Layout, seed: u64) -> Result<Self, PipelineError> {
        let path = layout.manifest();
        if !path.is_file() {
            return Ok(Manifest::new(seed));
        }
        let bytes = read_file(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| super::input_err(&path, e))
    }

    pub fn save(&self, layout: &Layout) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_file(&layout.manifest(), text.as_bytes())
    }

    /// Record a stage with digests of its input and output files.
    pub fn record(
        &mut self,
        layout: &Layout,
        stage: &str,
        inputs: &[&Path],
        outputs: &[&Path],
        status: BTreeMap<String, String>,
    ) -> Result<(), PipelineError> {
        let digest = |paths: &[&Path]| -> Result<BTreeMap<String, String>, PipelineError> {
            paths.iter().map(|p| Ok((layout.relative(p), file_digest(p)?))).collect()
        };
        let rec = StageRecord { inputs: digest(inputs)?, outputs: digest(outputs)?, status };
        self.stages.insert(stage.to_string(), rec);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn fresh_manifest_lists_every_module() {
        let m = Manifest::new(3);
        assert_eq!(m.modules.len(), MODULES.len());
        assert!(m.stages.is_empty());
    }
}
