//! Estimation stack for the trial: adjusted linear models, contrasts,
//! saving rates, permutation inference, panel fixed effects, engagement
//! and survival summaries.

mod dataset;
mod engagement;
mod inference;
mod ols;
mod panel_fe;
mod permutation;
mod table;
mod trajectory;

pub use dataset::{analytic_units, arm_design, Covariates, Unit, COVARIATE_NAMES};
pub use engagement::{engaged_participants, engagement_rate, first_missed_round, km_curve, km_survival, SurvivalCurve, REPLY_WINDOW_HOURS};
pub use inference::{contrasts, fit_arm_model, pool_slices, pool_standardized, saving_rate, standardize, ContrastResult, PooledModel, SavingRates};
pub use ols::{fit_ols, AdjustedModel, Covariance, Design};
pub use panel_fe::{panel_fe, panel_fe_from_trial, FeFit, FeObs};
pub use permutation::{permutation_test, PermutationResult};
pub use table::{ResultRow, ResultTable};
pub use trajectory::{cumulative_trajectory, TrajectoryPoint};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("design is rank deficient; collinear column(s): {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("need more observations than parameters (n = {n}, k = {k})")]
    TooFewObservations { n: usize, k: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("model lacks arm term `{0}`")]
    MissingArm(String),
    #[error("baseline mean must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("zero variance in {0}")]
    ZeroVariance(String),
    #[error("empty input: {0}")]
    Empty(String),
}
