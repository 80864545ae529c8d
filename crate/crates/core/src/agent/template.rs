//! Deterministic template backend.
//!
//! Answers the three agent tasks from the prompt fields alone: a four-line
//! summary, two parameterized suggestions per resource, and a
//! feasibility x impact ranking.

use super::backend::{field, missing, BackendError, Fields, GenerationBackend, TASK, TASK_GENERATE, TASK_RANK, TASK_SUMMARIZE};
use super::select::feasibility;
use crate::knowledge::{behavior_tag_for, Strategy};
use crate::rng;
use rand::seq::IndexedRandom;

/// Shower shortening options, in seconds.
pub const SHOWER_CUTS: [u32; 3] = [30, 60, 90];

#[derive(Debug, Clone, Default)]
pub struct TemplateBackend;

impl TemplateBackend {
    pub fn new() -> Self {
        TemplateBackend
    }

    fn fail(&self, message: impl Into<String>) -> BackendError {
        BackendError { backend: self.name().into(), attempts: 1, retryable: false, message: message.into() }
    }

    fn num(&self, fields: &Fields, key: &str) -> Result<f64, BackendError> {
        let raw = field(fields, key).ok_or_else(|| missing(self.name(), key))?;
        raw.parse().map_err(|_| self.fail(format!("field `{key}` is not a number: `{raw}`")))
    }

    fn summarize(&self, f: &Fields) -> Result<Fields, BackendError> {
        let psych = self.num(f, "mean_psych")?;
        let elec_ratio = self.num(f, "electricity_peer_ratio")?;
        let water_ratio = self.num(f, "hot_water_peer_ratio")?;
        let elec_trend = field(f, "electricity_trend").unwrap_or("flat");
        let water_trend = field(f, "hot_water_trend").unwrap_or("flat");
        let top = field(f, "top_appliance").filter(|s| !s.is_empty()).unwrap_or("lighting");
        let prior: u32 = field(f, "prior_rounds").and_then(|s| s.parse().ok()).unwrap_or(0);

        let level = |r: f64| {
            if r > 1.1 {
                "above"
            } else if r < 0.9 {
                "below"
            } else {
                "close to"
            }
        };
        let disposition = if psych >= 3.75 {
            "strongly pro-conservation"
        } else if psych >= 2.75 {
            "moderately pro-conservation"
        } else {
            "weakly pro-conservation"
        };
        let adoption = if psych >= 3.75 {
            "high; ready for concrete routine changes"
        } else if psych >= 2.75 {
            "moderate; prefers small, easy steps"
        } else {
            "low; start with monitoring and minimal effort"
        };
        let largest = if elec_ratio >= water_ratio {
            format!("electricity, mainly the {top}")
        } else {
            "hot water, mainly shower time".to_string()
        };
        let effectiveness = if prior == 0 {
            "no suggestions delivered yet".to_string()
        } else {
            let reply = field(f, "last_feedback").map(|s| format!("; last reply: {s}")).unwrap_or_default();
            format!("after {prior} round(s) electricity is trending {elec_trend}, hot water {water_trend}{reply}")
        };

        let mut out = Fields::new();
        out.insert(
            "habits_traits".into(),
            format!(
                "{disposition}; electricity use {} peers, hot-water use {} peers",
                level(elec_ratio),
                level(water_ratio)
            ),
        );
        out.insert("likely_adoption".into(), adoption.into());
        out.insert("largest_savings".into(), largest);
        out.insert("prior_effectiveness".into(), effectiveness);
        Ok(out)
    }

    fn generate(&self, f: &Fields, seed: u64) -> Result<Fields, BackendError> {
        let resource = field(f, "resource").ok_or_else(|| missing(self.name(), "resource"))?;
        let participant = field(f, "participant_id").unwrap_or("");
        let mut pick = rng::stream(seed, &format!("template/{participant}/{resource}"));
        let suggestions: Vec<(String, Strategy, String)> = match resource {
            "hot_water" => {
                let secs = *SHOWER_CUTS.choose(&mut pick).expect("non-empty");
                vec![
                    (
                        "shower".into(),
                        Strategy::DurationControl,
                        format!("Shorten each shower by {secs} seconds, for example by turning the water off while applying soap."),
                    ),
                    (
                        "shower".into(),
                        Strategy::FrequencyReduction,
                        "Take one fewer long shower per week and keep the others brief.".into(),
                    ),
                ]
            }
            "electricity" => {
                let apps: Vec<&str> = field(f, "appliances")
                    .unwrap_or("")
                    .split(';')
                    .filter_map(|e| e.split(':').next())
                    .filter(|a| !a.is_empty())
                    .collect();
                let first = apps.first().copied().unwrap_or("desk lamp");
                let mut out = vec![primary_electric(first)];
                match apps.get(1) {
                    Some(second) => out.push(duration_electric(second)),
                    None => out.push(duration_electric(first)),
                }
                if out[0].1 == out[1].1 && out[0].0 == out[1].0 {
                    out[1] = frequency_electric(first);
                }
                out
            }
            other => return Err(self.fail(format!("unknown resource `{other}`"))),
        };
        let mut out = Fields::new();
        for (i, (appliance, strategy, text)) in suggestions.into_iter().enumerate() {
            let k = i + 1;
            out.insert(format!("suggestion_{k}_behavior_type"), behavior_tag_for(&appliance).into());
            out.insert(format!("suggestion_{k}_appliance"), appliance);
            out.insert(format!("suggestion_{k}_strategy"), strategy.as_str().into());
            out.insert(format!("suggestion_{k}_text"), text);
        }
        Ok(out)
    }

    fn rank(&self, f: &Fields) -> Result<Fields, BackendError> {
        let n: usize = self.num(f, "candidate_count")? as usize;
        let mut scored = Vec::with_capacity(n);
        for k in 1..=n {
            let id = field(f, &format!("candidate_{k}_id")).ok_or_else(|| missing(self.name(), "candidate id"))?;
            let strategy: Strategy = field(f, &format!("candidate_{k}_strategy"))
                .ok_or_else(|| missing(self.name(), "candidate strategy"))?
                .parse()
                .map_err(|m: String| self.fail(m))?;
            let share = self.num(f, &format!("candidate_{k}_share"))?;
            scored.push((feasibility(strategy) * share, id));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let ranking: Vec<&str> = scored.into_iter().map(|(_, id)| id).collect();
        let mut out = Fields::new();
        out.insert("ranking".into(), ranking.join(","));
        Ok(out)
    }
}

fn primary_electric(appliance: &str) -> (String, Strategy, String) {
    let a = appliance.to_lowercase();
    if a.contains("air conditioner") {
        (
            appliance.into(),
            Strategy::TemperatureAdjustment,
            format!("Set the {appliance} 2 °C warmer when cooling, for example 26 °C instead of 24 °C."),
        )
    } else if a.contains("heater") {
        (
            appliance.into(),
            Strategy::TemperatureAdjustment,
            format!("Set the {appliance} 2 °C lower and add a layer of clothing instead."),
        )
    } else if a.contains("kettle") || a.contains("hair dryer") {
        frequency_electric(appliance)
    } else {
        duration_electric(appliance)
    }
}

fn duration_electric(appliance: &str) -> (String, Strategy, String) {
    (
        appliance.into(),
        Strategy::DurationControl,
        format!("Switch the {appliance} off 30 minutes earlier each day, and never leave it running in an empty room."),
    )
}

fn frequency_electric(appliance: &str) -> (String, Strategy, String) {
    (
        appliance.into(),
        Strategy::FrequencyReduction,
        format!("Use the {appliance} two fewer times per week by batching what you need."),
    )
}

impl GenerationBackend for TemplateBackend {
    fn name(&self) -> &str {
        "template"
    }

    fn complete(&self, fields: &Fields, seed: u64) -> Result<Fields, BackendError> {
        match field(fields, TASK) {
            Some(TASK_SUMMARIZE) => self.summarize(fields),
            Some(TASK_GENERATE) => self.generate(fields, seed),
            Some(TASK_RANK) => self.rank(fields),
            Some(other) => Err(self.fail(format!("unsupported task `{other}`"))),
            None => Err(missing(self.name(), TASK)),
        }
    }
}
