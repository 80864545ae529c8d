use super::PipelineError;
use crate::rng;
use crate::sim::{clean_panel, exclusion_rates, randomize, simulate_trial, synth_population, CleanRules, SimConfig};
use crate::stats::{analytic_units, contrasts, engagement_rate, fit_arm_model, saving_rate};
use crate::types::{Arm, Resource};
use std::collections::BTreeMap;

/// Headline estimates from one simulated trial, computed in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    /// Adjusted arm contrasts (`T1-C`, `T2-C`, `T2-T1`) per resource.
    pub contrasts: BTreeMap<Resource, BTreeMap<String, f64>>,
    pub omnibus_p: BTreeMap<Resource, f64>,
    /// Adjusted saving rate of C, T1, T2 per resource.
    pub saving_rates: BTreeMap<Resource, [f64; 3]>,
    pub exclusion_rates: BTreeMap<Resource, [f64; 3]>,
    pub engagement: [f64; 3],
}

/// Population-level arm contrast implied by the configuration, in outcome units.
pub fn configured_truth(cfg: &SimConfig, resource: Resource, treated: Arm) -> f64 {
    let r = cfg.response(resource);
    -(r.mean_saving(treated) - r.mean_saving(Arm::C)) * r.base_mean
}

/// Simulate, clean and analyse one trial with default cleaning rules.
pub fn trial_replication(cfg: &SimConfig, seed: u64) -> Result<Replication, PipelineError> {
    let pop = synth_population(cfg, rng::derive(seed, "population"))?;
    let assignment = randomize(&pop.clusters, rng::derive(seed, "randomize"))?;
    let out = simulate_trial(&pop.profiles, &assignment, cfg, rng::derive(seed, "simulate"))?;
    let (panel, report) = clean_panel(&out.panel, &CleanRules::default());
    let mut rep = Replication {
        contrasts: BTreeMap::new(),
        omnibus_p: BTreeMap::new(),
        saving_rates: BTreeMap::new(),
        exclusion_rates: BTreeMap::new(),
        engagement: engagement_rate(&panel.events, &panel.arms),
    };
    let fail = |r: Resource, e: crate::stats::StatsError| PipelineError::Validation(format!("{r}: {e}"));
    for r in Resource::ALL {
        let units = analytic_units(&panel, &out.profiles, r);
        let model = fit_arm_model(&units, true).map_err(|e| fail(r, e))?;
        let cs = contrasts(&model).map_err(|e| fail(r, e))?;
        rep.omnibus_p.insert(r, cs[0].p);
        rep.contrasts.insert(r, cs.iter().filter_map(|c| c.estimate.map(|e| (c.label.clone(), e))).collect());
        let base = units.iter().map(|u| u.baseline).sum::<f64>() / units.len() as f64;
        rep.saving_rates.insert(r, saving_rate(&model, base).map_err(|e| fail(r, e))?.rates);
        if let Some(x) = report.get(r) {
            rep.exclusion_rates.insert(r, exclusion_rates(x));
        }
    }
    Ok(rep)
}
