use super::config::SAVING_BOUNDS;
use super::{Assignment, EngagementEvent, EventKind, PanelRow, SimConfig, SimError, TrialPanel};
use crate::profile::{DailyValue, ParticipantProfile};
use crate::rng;
use crate::types::{round_of_day, Arm, Resource, BASELINE_DAYS, INTERVENTION_DAYS, ROUNDS};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Quick,
    Gradual,
    Rebound,
    Late,
    Adverse,
}

impl Archetype {
    pub const ALL: [Archetype; 5] =
        [Archetype::Quick, Archetype::Gradual, Archetype::Rebound, Archetype::Late, Archetype::Adverse];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Quick => "quick",
            Archetype::Gradual => "gradual",
            Archetype::Rebound => "rebound",
            Archetype::Late => "late",
            Archetype::Adverse => "adverse",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Archetype {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Archetype::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| format!("unknown archetype `{s}`"))
    }
}

/// Simulated truth for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    pub participant_id: String,
    pub arm: Arm,
    pub archetype: Archetype,
    /// Daily base rate for electricity and hot water.
    pub base: [f64; 2],
    /// Saving fraction per round, per resource.
    pub saving: [[f64; 5]; 2],
    pub friction: [f64; 2],
    pub noise_sd: [f64; 2],
    /// Per-round probability of a reply within 48 hours.
    pub reply_prob: f64,
}

impl ResponseModel {
    pub fn saving_at(&self, resource: Resource, round: u32) -> f64 {
        self.saving[resource_index(resource)][(round - 1) as usize]
    }

    /// Expected intervention-period mean consumption.
    pub fn expected_intervention_mean(&self, resource: Resource) -> f64 {
        let i = resource_index(resource);
        self.base[i] * (1.0 - self.saving[i].iter().sum::<f64>() / ROUNDS as f64)
    }
}

fn resource_index(r: Resource) -> usize {
    match r {
        Resource::Electricity => 0,
        Resource::HotWater => 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// Input profiles with baseline consumption appended.
    pub profiles: Vec<ParticipantProfile>,
    pub panel: TrialPanel,
    pub truth: Vec<ResponseModel>,
    pub reply_intercepts: [f64; 3],
}

const REPLIES: [&str; 8] = [
    "Thanks, I will try to switch things off when I leave the room.",
    "Showers are hard to shorten when it is cold.",
    "Got it, I checked my usage today.",
    "I tried the suggestion this week.",
    "Could you give me a more specific tip?",
    "My roommate uses most of the electricity.",
    "OK, noted.",
    "The report was helpful, the comparison surprised me.",
];

/// Probability of at least one open and at least one reply over all rounds.
pub fn engagement_probability(reply_prob: f64, open_prob: f64, late_reply_prob: f64) -> f64 {
    let r = ROUNDS as i32;
    let q = reply_prob + (1.0 - reply_prob) * late_reply_prob;
    let no_open = 1.0 - open_prob;
    1.0 - no_open.powi(r) - (1.0 - q).powi(r) + (no_open * (1.0 - q)).powi(r)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mix_for(cfg: &SimConfig, arm: Arm) -> [f64; 5] {
    match arm {
        Arm::T2 => cfg.archetypes.mix_personalized,
        Arm::C | Arm::T1 => cfg.archetypes.mix_conventional,
    }
}

fn expected_engagement(cfg: &SimConfig, arm: Arm, alpha: f64) -> f64 {
    let e = &cfg.engagement;
    let mix = mix_for(cfg, arm);
    // midpoint rule on the standard normal over [-8, 8]
    const STEPS: usize = 1600;
    let h = 16.0 / STEPS as f64;
    let mut total = 0.0;
    for (a, &w) in mix.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for k in 0..STEPS {
            let z = -8.0 + (k as f64 + 0.5) * h;
            let dens = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let p = sigmoid(alpha + cfg.archetypes.reply_shift[a] + e.random_effect_sd * z);
            acc += dens * h * engagement_probability(p, e.open_prob, e.late_reply_prob);
        }
        total += w * acc;
    }
    total
}

/// Reply-logit intercepts per arm that hit the engagement targets in expectation.
pub fn calibrate_reply_intercepts(cfg: &SimConfig) -> Result<[f64; 3], SimError> {
    let mut out = [0.0; 3];
    for arm in Arm::ALL {
        let target = cfg.engagement.targets[arm.index()];
        let (mut lo, mut hi) = (-30.0, 30.0);
        let (flo, fhi) = (expected_engagement(cfg, arm, lo), expected_engagement(cfg, arm, hi));
        if !(flo < target && target < fhi) {
            return Err(SimError::Config(format!(
                "engagement target {target} for {arm} outside the attainable range ({flo:.3}, {fhi:.3})"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if expected_engagement(cfg, arm, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out[arm.index()] = 0.5 * (lo + hi);
    }
    Ok(out)
}

fn normal<R: Rng>(r: &mut R) -> f64 {
    StandardNormal.sample(r)
}

/// Mean-one lognormal factor.
fn lognormal_factor<R: Rng>(r: &mut R, sd: f64) -> f64 {
    if sd == 0.0 {
        1.0
    } else {
        (sd * normal(r) - 0.5 * sd * sd).exp()
    }
}

fn pick_archetype<R: Rng>(r: &mut R, mix: &[f64; 5]) -> Archetype {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, w) in mix.iter().enumerate() {
        acc += w;
        if u < acc {
            return Archetype::ALL[i];
        }
    }
    Archetype::Adverse
}

/// Simulate the baseline and five intervention rounds.
pub fn simulate_trial(
    profiles: &[ParticipantProfile],
    assignment: &Assignment,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let intercepts = calibrate_reply_intercepts(cfg)?;
    let mut arms = BTreeMap::new();
    let mut clusters = BTreeMap::new();
    for p in profiles {
        let arm = assignment.arm(&p.participant_id).ok_or_else(|| SimError::Unassigned(p.participant_id.clone()))?;
        arms.insert(p.participant_id.clone(), arm);
        clusters.insert(p.participant_id.clone(), assignment.cluster_of.get(&p.participant_id).copied().unwrap_or(0));
    }

    // Centre the T2 psych/budget modifier on the arm's own members.
    let t2: Vec<&ParticipantProfile> = profiles.iter().filter(|p| arms[&p.participant_id] == Arm::T2).collect();
    let (psych_bar, budget_bar) = if t2.is_empty() {
        (0.0, 0.0)
    } else {
        let k = t2.len() as f64;
        (
            t2.iter().map(|p| p.mean_psych()).sum::<f64>() / k,
            t2.iter().map(|p| p.socio.living_budget).sum::<f64>() / k,
        )
    };

    let (lo, hi) = SAVING_BOUNDS;
    let mut truth = Vec::with_capacity(profiles.len());
    let mut rows = Vec::with_capacity(profiles.len() * 2 * (BASELINE_DAYS + INTERVENTION_DAYS) as usize);
    let mut events = Vec::new();
    let mut out_profiles = Vec::with_capacity(profiles.len());

    for p in profiles {
        let pid = &p.participant_id;
        let arm = arms[pid];
        let mut r = rng::stream(seed, &format!("sim/{pid}/traits"));
        let mix = mix_for(cfg, arm);
        let archetype = pick_archetype(&mut r, &mix);
        let a = &cfg.archetypes;
        let h = &cfg.heterogeneity;
        let modifier = if arm == Arm::T2 {
            h.psych_coef * (p.mean_psych() - psych_bar) + h.budget_coef * (p.socio.living_budget - budget_bar)
        } else {
            0.0
        };

        let mut model = ResponseModel {
            participant_id: pid.clone(),
            arm,
            archetype,
            base: [0.0; 2],
            saving: [[0.0; 5]; 2],
            friction: [0.0; 2],
            noise_sd: [0.0; 2],
            reply_prob: 0.0,
        };
        for res in Resource::ALL {
            let ri = resource_index(res);
            let rr = cfg.response(res);
            model.base[ri] = rr.base_mean * lognormal_factor(&mut r, rr.between_sd);
            model.friction[ri] = rr.friction;
            model.noise_sd[ri] = rr.noise_sd;
            let idio = h.individual_sd * normal(&mut r);
            for round in 1..=ROUNDS {
                let k = (round - 1) as usize;
                let centred: f64 = a.shapes[archetype.index()][k]
                    - (0..5).map(|b| mix[b] * a.shapes[b][k]).sum::<f64>();
                let ramp = if ROUNDS > 1 { k as f64 / (ROUNDS - 1) as f64 } else { 0.0 };
                let raw = rr.saving.get(arm)[k] + a.amplitude * centred + idio + modifier;
                let s = raw * (1.0 - rr.friction * ramp);
                model.saving[ri][k] = s.clamp(lo + 1e-6, hi - 1e-6);
            }
        }
        let u = cfg.engagement.random_effect_sd * normal(&mut r);
        model.reply_prob = sigmoid(intercepts[arm.index()] + a.reply_shift[archetype.index()] + u);

        let mut profile = p.clone();
        for res in Resource::ALL {
            let ri = resource_index(res);
            let mut noise = rng::stream(seed, &format!("sim/{pid}/{res}/noise"));
            let mut miss = rng::stream(seed, &format!("sim/{pid}/{res}/missing"));
            let m = &cfg.missingness;
            let dropout = miss
                .random_bool(m.dropout_rate)
                .then(|| BASELINE_DAYS + miss.random_range(0..INTERVENTION_DAYS));
            let mut baseline = Vec::with_capacity(BASELINE_DAYS as usize);
            for day in 0..BASELINE_DAYS + INTERVENTION_DAYS {
                let round = round_of_day(day).unwrap_or(0);
                let s = if round == 0 { 0.0 } else { model.saving[ri][(round - 1) as usize] };
                let mut v = model.base[ri] * (1.0 - s) * lognormal_factor(&mut noise, model.noise_sd[ri]);
                let gap = miss.random_bool(m.day_missing_rate) || dropout.is_some_and(|d| day >= d);
                if miss.random_bool(m.outlier_rate) {
                    v *= m.outlier_factor;
                }
                let value = (!gap).then_some(v);
                if day < BASELINE_DAYS {
                    baseline.push(DailyValue { day, value });
                }
                rows.push(PanelRow {
                    participant_id: pid.clone(),
                    arm,
                    cluster_id: clusters[pid],
                    day,
                    round,
                    resource: res,
                    value,
                    missing: gap,
                });
            }
            profile = profile
                .with_history(res, &baseline)
                .map_err(|e| SimError::Config(format!("baseline history: {e}")))?;
        }

        let mut ev = rng::stream(seed, &format!("sim/{pid}/engagement"));
        let e = &cfg.engagement;
        for round in 1..=ROUNDS {
            if ev.random_bool(e.open_prob) {
                events.push(EngagementEvent {
                    participant_id: pid.clone(),
                    round,
                    kind: EventKind::Open,
                    hours_after_send: ev.random_range(0.0..72.0),
                    text: String::new(),
                });
            }
            let hours = if ev.random_bool(model.reply_prob) {
                Some(ev.random_range(0.0..48.0))
            } else if ev.random_bool(e.late_reply_prob) {
                Some(ev.random_range(48.0..168.0))
            } else {
                None
            };
            if let Some(hours_after_send) = hours {
                let text = REPLIES[ev.random_range(0..REPLIES.len())].to_string();
                events.push(EngagementEvent {
                    participant_id: pid.clone(),
                    round,
                    kind: EventKind::Reply,
                    hours_after_send,
                    text,
                });
            }
        }

        truth.push(model);
        out_profiles.push(profile);
    }

    Ok(SimOutput {
        profiles: out_profiles,
        panel: TrialPanel { start_date: cfg.start_date, rows, arms, clusters, events, excluded: BTreeSet::new() },
        truth,
        reply_intercepts: intercepts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{Gender, PsychScores, Sociodemographics};
    use crate::sim::ArmSavings;

    #[test]
    fn noiseless_single_participant_is_exact() {
        let mut cfg = SimConfig::default();
        cfg.electricity.base_mean = 3.0;
        cfg.electricity.between_sd = 0.0;
        cfg.electricity.noise_sd = 0.0;
        cfg.electricity.saving = ArmSavings::flat(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        cfg.archetypes.amplitude = 0.0;
        cfg.heterogeneity.individual_sd = 0.0;
        cfg.missingness = crate::sim::MissingnessConfig {
            dropout_rate: 0.0,
            day_missing_rate: 0.0,
            outlier_rate: 0.0,
            outlier_factor: 1.0,
        };
        let p = ParticipantProfile::new(
            "P1",
            PsychScores::uniform(3.0),
            Sociodemographics { living_budget: 1.0, gender: Gender::Male, bill_experience: false },
            vec![],
        );
        let a = Assignment {
            by_cluster: [(1, Arm::T2)].into(),
            by_participant: [("P1".to_string(), Arm::T2)].into(),
            cluster_of: [("P1".to_string(), 1)].into(),
        };
        let out = simulate_trial(&[p], &a, &cfg, 3).unwrap();
        for row in out.panel.rows.iter().filter(|r| r.resource == Resource::Electricity) {
            let want = if row.round == 0 { 3.0 } else { 2.0 };
            assert!((row.value.unwrap() - want).abs() < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn calibration_hits_targets() {
        let cfg = SimConfig::default();
        let alpha = calibrate_reply_intercepts(&cfg).unwrap();
        for arm in Arm::ALL {
            let got = expected_engagement(&cfg, arm, alpha[arm.index()]);
            assert!((got - cfg.engagement.targets[arm.index()]).abs() < 1e-9);
        }
    }

    #[test]
    fn engagement_probability_closed_form() {
        // reply always, open always -> certain engagement
        assert!((engagement_probability(1.0, 1.0, 0.0) - 1.0).abs() < 1e-12);
        assert_eq!(engagement_probability(0.0, 1.0, 0.0), 0.0);
        // brute force over the 2^10 open/reply patterns
        let (p, o, l) = (0.3, 0.6, 0.1);
        let q = p + (1.0 - p) * l;
        let mut brute = 0.0;
        for mask in 0u32..1024 {
            let mut prob = 1.0;
            let (mut any_open, mut any_reply) = (false, false);
            for k in 0..5 {
                let open = mask >> k & 1 == 1;
                let reply = mask >> (k + 5) & 1 == 1;
                prob *= (if open { o } else { 1.0 - o }) * (if reply { q } else { 1.0 - q });
                any_open |= open;
                any_reply |= reply;
            }
            if any_open && any_reply {
                brute += prob;
            }
        }
        assert!((engagement_probability(p, o, l) - brute).abs() < 1e-12);
    }
}
