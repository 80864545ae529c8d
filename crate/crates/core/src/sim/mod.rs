//! Synthetic three-arm trial: population, cluster randomization,
//! consumption and engagement simulation, and cleaning.

mod clean;
mod config;
mod panel;
mod population;
mod randomize;
mod simulate;

pub use clean::{clean_panel, exclusion_rates, quartiles, CleanRules, ExclusionReport, ResourceExclusions};
pub use config::{
    ArchetypeConfig, ArmSavings, EngagementConfig, HeterogeneityConfig, MissingnessConfig, ResourceResponse, SimConfig,
};
pub use panel::{EngagementEvent, EventKind, PanelRow, Phase, TrialPanel};
pub use population::{synth_population, AssignmentCluster, Population};
pub use randomize::{randomize, Assignment};
pub use simulate::{calibrate_reply_intercepts, engagement_probability, simulate_trial, Archetype, ResponseModel, SimOutput};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("population of {0} cannot fill three arms")]
    PopulationTooSmall(usize),
    #[error("{clusters} clusters cannot fill {arms} arms")]
    TooFewClusters { clusters: usize, arms: usize },
    #[error("participant {0} has no arm assignment")]
    Unassigned(String),
    #[error("panel io: {0}")]
    Io(#[from] std::io::Error),
    #[error("panel csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("panel line {line}: {message}")]
    Parse { line: usize, message: String },
}
