use super::{arm_design, fit_ols, saving_rate, Covariance, StatsError, Unit};
use crate::types::ROUNDS;
use serde::{Deserialize, Serialize};

/// Saving rates on cumulative means through round `round`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub round: u32,
    /// Adjusted saving rate per arm (C, T1, T2).
    pub rates: [f64; 3],
    /// T1 and T2 rates minus the C rate.
    pub net_t1: f64,
    pub net_t2: f64,
}

/// Refit the adjusted model on cumulative means for k = 1..=5, clustering by
/// assignment cluster, and report rates net of the control arm.
pub fn cumulative_trajectory(units: &[Unit], covariates: bool) -> Result<Vec<TrajectoryPoint>, StatsError> {
    if units.is_empty() {
        return Err(StatsError::Empty("no analytic units".into()));
    }
    let baseline_mean = units.iter().map(|u| u.baseline).sum::<f64>() / units.len() as f64;
    (1..=ROUNDS)
        .map(|k| {
            let (design, y, kept) = arm_design(units, |u| u.cumulative[(k - 1) as usize], covariates)?;
            let keys = kept.iter().map(|&i| units[i].cluster_id.to_string()).collect();
            let model = fit_ols(&design, &y, &Covariance::ClusterRobust(keys))?;
            let rates = saving_rate(&model, baseline_mean)?.rates;
            Ok(TrajectoryPoint { round: k, rates, net_t1: rates[1] - rates[0], net_t2: rates[2] - rates[0] })
        })
        .collect()
}
