use super::{Design, StatsError};
use crate::profile::{Gender, ParticipantProfile};
use crate::sim::TrialPanel;
use crate::types::{Arm, Resource, ROUNDS};
use std::collections::BTreeMap;

pub const COVARIATE_NAMES: [&str; 5] = ["baseline", "mean_psych", "living_budget", "female", "bill_experience"];

#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub mean_psych: f64,
    pub psych: [f64; 5],
    pub living_budget: f64,
    pub female: f64,
    pub bill_experience: f64,
}

impl Covariates {
    pub fn of(profile: &ParticipantProfile) -> Self {
        Covariates {
            mean_psych: profile.mean_psych(),
            psych: profile.psych.as_array(),
            living_budget: profile.socio.living_budget,
            female: f64::from(profile.socio.gender == Gender::Female),
            bill_experience: f64::from(profile.socio.bill_experience),
        }
    }
}

/// One participant in one resource's analytic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub participant_id: String,
    pub arm: Arm,
    pub cluster_id: u32,
    pub resource: Resource,
    /// Mean of valid baseline days.
    pub baseline: f64,
    /// Mean of valid intervention days.
    pub outcome: f64,
    pub round_means: [Option<f64>; 5],
    /// Mean of valid days in rounds 1..=k.
    pub cumulative: [Option<f64>; 5],
    pub covariates: Covariates,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Analytic sample: retained participants with baseline and outcome data.
pub fn analytic_units(panel: &TrialPanel, profiles: &[ParticipantProfile], resource: Resource) -> Vec<Unit> {
    let by_id: BTreeMap<&str, &ParticipantProfile> =
        profiles.iter().map(|p| (p.participant_id.as_str(), p)).collect();
    let mut units = Vec::new();
    for (pid, rows) in panel.by_participant(resource) {
        if panel.is_excluded(pid, resource) {
            continue;
        }
        let Some(profile) = by_id.get(pid) else { continue };
        let mut base = Vec::new();
        let mut rounds: Vec<Vec<f64>> = vec![Vec::new(); ROUNDS as usize];
        for r in &rows {
            if let Some(v) = r.valid() {
                if r.round == 0 {
                    base.push(v);
                } else {
                    rounds[(r.round - 1) as usize].push(v);
                }
            }
        }
        let all: Vec<f64> = rounds.iter().flatten().copied().collect();
        let (Some(baseline), Some(outcome)) = (mean(&base), mean(&all)) else { continue };
        let mut round_means = [None; 5];
        let mut cumulative = [None; 5];
        let mut acc = Vec::new();
        for k in 0..ROUNDS as usize {
            round_means[k] = mean(&rounds[k]);
            acc.extend_from_slice(&rounds[k]);
            cumulative[k] = mean(&acc);
        }
        units.push(Unit {
            participant_id: pid.to_string(),
            arm: rows[0].arm,
            cluster_id: rows[0].cluster_id,
            resource,
            baseline,
            outcome,
            round_means,
            cumulative,
            covariates: Covariates::of(profile),
        });
    }
    units
}

/// Design with intercept, T1/T2 indicators (C reference) and the adjustment
/// covariates. Units lacking an outcome are skipped; returns kept indices.
pub fn arm_design(
    units: &[Unit],
    outcome: impl Fn(&Unit) -> Option<f64>,
    covariates: bool,
) -> Result<(Design, Vec<f64>, Vec<usize>), StatsError> {
    let kept: Vec<usize> = (0..units.len()).filter(|&i| outcome(&units[i]).is_some()).collect();
    for arm in Arm::ALL {
        if !kept.iter().any(|&i| units[i].arm == arm) {
            return Err(StatsError::MissingArm(arm.to_string()));
        }
    }
    let col = |f: &dyn Fn(&Unit) -> f64| kept.iter().map(|&i| f(&units[i])).collect::<Vec<f64>>();
    let mut names = vec!["intercept".to_string(), "T1".to_string(), "T2".to_string()];
    let mut cols = vec![
        vec![1.0; kept.len()],
        col(&|u| f64::from(u.arm == Arm::T1)),
        col(&|u| f64::from(u.arm == Arm::T2)),
    ];
    if covariates {
        let extra: [(&str, Box<dyn Fn(&Unit) -> f64>); 5] = [
            ("baseline", Box::new(|u| u.baseline)),
            ("mean_psych", Box::new(|u| u.covariates.mean_psych)),
            ("living_budget", Box::new(|u| u.covariates.living_budget)),
            ("female", Box::new(|u| u.covariates.female)),
            ("bill_experience", Box::new(|u| u.covariates.bill_experience)),
        ];
        for (name, f) in extra {
            names.push(name.to_string());
            cols.push(col(&*f));
        }
    }
    let y = kept.iter().map(|&i| outcome(&units[i]).expect("filtered")).collect();
    Ok((Design::from_columns(names, &cols)?, y, kept))
}
