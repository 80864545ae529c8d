//! File-based orchestration: simulate, nudge, analyze and report.
//!
//! Every stage reads its inputs from and writes its outputs to one run
//! directory, and records input and output digests in `manifest.json`.
//! All randomness derives from the run seed through labelled streams.

mod analyze;
mod config;
mod manifest;
mod nudge;
mod replicate;
mod report;
mod simulate;

pub use simulate::simulate_in_memory;

pub use analyze::{cmd_analyze, AnalyzeSummary};
pub use config::{AnalysisConfig, BackendConfig, BackendKind, RunConfig};
pub use manifest::{Manifest, StageRecord, MODULES};
pub use nudge::{cmd_nudge, NudgeSummary};
pub use replicate::{configured_truth, trial_replication, Replication};
pub use report::cmd_report;
pub use simulate::{cmd_simulate, SimulateSummary};

use crate::agent::AgentError;
use crate::knowledge::KnowledgeError;
use crate::sim::SimError;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("round {0} is outside 1..=5")]
    Round(u32),
    #[error("missing input {}: run the {stage} stage first", path.display())]
    Dependency { path: PathBuf, stage: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Library(#[from] KnowledgeError),
}

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Dependency,
    Other,
}

impl PipelineError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PipelineError::Validation(_) | PipelineError::Round(_) => ErrorClass::Validation,
            PipelineError::Sim(SimError::Config(_) | SimError::PopulationTooSmall(_) | SimError::TooFewClusters { .. }) => {
                ErrorClass::Validation
            }
            PipelineError::Dependency { .. } => ErrorClass::Dependency,
            _ => ErrorClass::Other,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn input_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Input { path: path.to_path_buf(), message: e.to_string() }
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn panel(&self) -> PathBuf {
        self.root.join("panel.csv")
    }
    pub fn events(&self) -> PathBuf {
        self.root.join("events.csv")
    }
    pub fn assignment(&self) -> PathBuf {
        self.root.join("assignment.csv")
    }
    pub fn truth(&self) -> PathBuf {
        self.root.join("truth.csv")
    }
    pub fn exclusions(&self) -> PathBuf {
        self.root.join("exclusion_report.txt")
    }
    /// Profile snapshots after `round` (0 = baseline).
    pub fn profiles(&self, round: u32) -> PathBuf {
        if round == 0 {
            self.root.join("profiles_round0.jsonl")
        } else {
            self.nudge_dir().join(format!("profiles_round{round}.jsonl"))
        }
    }
    pub fn nudge_dir(&self) -> PathBuf {
        self.root.join("nudge")
    }
    pub fn bundles(&self, round: u32) -> PathBuf {
        self.nudge_dir().join(format!("bundles_round{round}.jsonl"))
    }
    pub fn flags(&self, round: u32) -> PathBuf {
        self.nudge_dir().join(format!("safety_flags_round{round}.jsonl"))
    }
    pub fn analysis_dir(&self) -> PathBuf {
        self.root.join("analysis")
    }
    pub fn analysis(&self, name: &str) -> PathBuf {
        self.analysis_dir().join(name)
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.md")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    /// Path relative to the run root, with forward slashes, for manifests.
    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().replace('\\', "/")
    }
}

pub(crate) fn require(path: &Path, stage: &str) -> Result<(), PipelineError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::Dependency { path: path.to_path_buf(), stage: stage.to_string() })
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(io_err(path))
}
