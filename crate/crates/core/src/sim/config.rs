use super::SimError;
use crate::types::{Arm, Resource, ROUNDS};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Per-round saving fractions for each arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSavings {
    pub c: Vec<f64>,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
}

impl ArmSavings {
    pub fn flat(c: f64, t1: f64, t2: f64) -> Self {
        let r = ROUNDS as usize;
        ArmSavings { c: vec![c; r], t1: vec![t1; r], t2: vec![t2; r] }
    }

    pub fn get(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::C => &self.c,
            Arm::T1 => &self.t1,
            Arm::T2 => &self.t2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceResponse {
    /// Population mean of the daily base rate.
    pub base_mean: f64,
    /// Lognormal sd of the base rate across participants.
    pub between_sd: f64,
    /// Lognormal sd of day-to-day noise.
    pub noise_sd: f64,
    pub saving: ArmSavings,
    /// Share of the saving lost by the final round, ramping linearly from round 1.
    pub friction: f64,
}

impl ResourceResponse {
    /// Arm saving at `round` after friction.
    pub fn effective_saving(&self, arm: Arm, round: u32) -> f64 {
        let ramp = if ROUNDS > 1 { (round - 1) as f64 / (ROUNDS - 1) as f64 } else { 0.0 };
        self.saving.get(arm)[(round - 1) as usize] * (1.0 - self.friction * ramp)
    }

    /// Mean effective saving over the intervention.
    pub fn mean_saving(&self, arm: Arm) -> f64 {
        (1..=ROUNDS).map(|r| self.effective_saving(arm, r)).sum::<f64>() / ROUNDS as f64
    }
}

/// Archetype mixes and per-round saving deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeConfig {
    /// Shares of quick, gradual, rebound, late, adverse in C and T1.
    pub mix_conventional: [f64; 5],
    /// Same, for T2.
    pub mix_personalized: [f64; 5],
    /// Extra saving per round for each archetype, before centering.
    pub shapes: [[f64; 5]; 5],
    /// Multiplier on `shapes`.
    pub amplitude: f64,
    /// Additive logit shift of the reply probability per archetype.
    pub reply_shift: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneityConfig {
    /// Sd of the idiosyncratic saving deviation.
    pub individual_sd: f64,
    /// Extra T2 saving per point of mean psych score above the arm mean.
    pub psych_coef: f64,
    /// Extra T2 saving per thousand RMB of budget above the arm mean.
    pub budget_coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingnessConfig {
    /// Probability that a participant stops reporting a resource at a
    /// uniformly drawn intervention day.
    pub dropout_rate: f64,
    /// Independent day-level missing probability.
    pub day_missing_rate: f64,
    /// Probability that an observed value is a gross recording error.
    pub outlier_rate: f64,
    pub outlier_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngagementConfig {
    /// Target engaged shares for C, T1, T2.
    pub targets: [f64; 3],
    pub open_prob: f64,
    /// Chance of a reply after the 48-hour window when none came in time.
    pub late_reply_prob: f64,
    /// Sd of the participant random effect on the reply logit.
    pub random_effect_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    /// Reference count of clusters of size 1, 2, 3, ...
    pub cluster_counts: Vec<usize>,
    pub start_date: NaiveDate,
    pub electricity: ResourceResponse,
    pub hot_water: ResourceResponse,
    pub archetypes: ArchetypeConfig,
    pub heterogeneity: HeterogeneityConfig,
    pub missingness: MissingnessConfig,
    pub engagement: EngagementConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let c_elec = 0.141;
        SimConfig {
            n: 233,
            cluster_counts: vec![180, 17, 5, 1],
            start_date: NaiveDate::from_ymd_opt(2024, 10, 14).expect("valid date"),
            electricity: ResourceResponse {
                base_mean: 3.06,
                between_sd: 0.35,
                noise_sd: 0.4,
                saving: ArmSavings {
                    c: vec![c_elec; 5],
                    t1: vec![0.16; 5],
                    t2: [0.084, 0.282, 0.183, 0.183, 0.183].iter().map(|d| c_elec + d).collect(),
                },
                friction: 0.0,
            },
            hot_water: ResourceResponse {
                base_mean: 36.3,
                between_sd: 0.35,
                noise_sd: 0.4,
                saving: ArmSavings::flat(0.05, 0.14, 0.155),
                friction: 0.35,
            },
            archetypes: ArchetypeConfig {
                mix_conventional: [0.25, 0.19, 0.20, 0.20, 0.16],
                mix_personalized: [0.39, 0.13, 0.15, 0.26, 0.07],
                shapes: [
                    [0.15, 0.12, 0.08, 0.06, 0.05],
                    [0.00, 0.02, 0.04, 0.06, 0.08],
                    [0.12, 0.04, -0.04, -0.06, -0.08],
                    [-0.12, -0.06, 0.00, 0.06, 0.10],
                    [-0.20, -0.20, -0.20, -0.20, -0.20],
                ],
                amplitude: 1.0,
                reply_shift: [0.5, 0.3, 0.0, -0.2, -0.6],
            },
            heterogeneity: HeterogeneityConfig { individual_sd: 0.1, psych_coef: 0.08, budget_coef: 0.03 },
            missingness: MissingnessConfig {
                dropout_rate: 0.45,
                day_missing_rate: 0.03,
                outlier_rate: 0.002,
                outlier_factor: 20.0,
            },
            engagement: EngagementConfig {
                targets: [0.571, 0.582, 0.697],
                open_prob: 0.7,
                late_reply_prob: 0.05,
                random_effect_sd: 1.5,
            },
        }
    }
}

/// Bounds on any individual or arm saving fraction.
pub const SAVING_BOUNDS: (f64, f64) = (-0.5, 0.9);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), SimError> {
    if cond {
        Ok(())
    } else {
        Err(SimError::Config(msg()))
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl SimConfig {
    pub fn response(&self, resource: Resource) -> &ResourceResponse {
        match resource {
            Resource::Electricity => &self.electricity,
            Resource::HotWater => &self.hot_water,
        }
    }

    pub fn response_mut(&mut self, resource: Resource) -> &mut ResourceResponse {
        match resource {
            Resource::Electricity => &mut self.electricity,
            Resource::HotWater => &mut self.hot_water,
        }
    }

    /// Copy with every arm saving set to zero.
    pub fn null_effects(mut self) -> Self {
        for r in Resource::ALL {
            self.response_mut(r).saving = ArmSavings::flat(0.0, 0.0, 0.0);
        }
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 3 {
            return Err(SimError::PopulationTooSmall(self.n));
        }
        check(!self.cluster_counts.is_empty() && self.cluster_counts[0] > 0, || {
            "cluster_counts must start with a positive singleton count".into()
        })?;
        let (lo, hi) = SAVING_BOUNDS;
        for r in Resource::ALL {
            let rr = self.response(r);
            check(rr.base_mean > 0.0, || format!("{r}.base_mean must be positive"))?;
            check(rr.between_sd >= 0.0 && rr.noise_sd >= 0.0, || format!("{r} sds must be nonnegative"))?;
            check(unit(rr.friction), || format!("{r}.friction must lie in [0, 1]"))?;
            for arm in Arm::ALL {
                let s = rr.saving.get(arm);
                check(s.len() == ROUNDS as usize, || format!("{r}.saving.{arm} needs {ROUNDS} values"))?;
                check(s.iter().all(|x| *x > lo && *x < hi), || {
                    format!("{r}.saving.{arm} values must lie in ({lo}, {hi})")
                })?;
            }
        }
        let a = &self.archetypes;
        for mix in [&a.mix_conventional, &a.mix_personalized] {
            check(mix.iter().all(|x| *x >= 0.0) && (mix.iter().sum::<f64>() - 1.0).abs() < 1e-6, || {
                "archetype mixes must be nonnegative and sum to 1".into()
            })?;
        }
        check(a.amplitude >= 0.0, || "archetype amplitude must be nonnegative".into())?;
        let h = &self.heterogeneity;
        check(h.individual_sd >= 0.0, || "individual_sd must be nonnegative".into())?;
        let m = &self.missingness;
        check(unit(m.dropout_rate) && unit(m.day_missing_rate) && unit(m.outlier_rate), || {
            "missingness rates must lie in [0, 1]".into()
        })?;
        check(m.outlier_factor >= 1.0, || "outlier_factor must be at least 1".into())?;
        let e = &self.engagement;
        check(e.targets.iter().all(|t| *t > 0.0 && *t < 1.0), || "engagement targets must lie in (0, 1)".into())?;
        check(e.open_prob > 0.0 && e.open_prob <= 1.0 && unit(e.late_reply_prob), || {
            "open_prob must lie in (0, 1] and late_reply_prob in [0, 1]".into()
        })?;
        check(e.random_effect_sd >= 0.0, || "random_effect_sd must be nonnegative".into())?;
        Ok(())
    }
}
