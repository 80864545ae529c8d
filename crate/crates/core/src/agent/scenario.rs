//! Quantitative scenarios: behavioural delta -> monthly saving -> analogy.

use super::feedback::nominal_usage;
use super::select::Candidate;
use crate::profile::ParticipantProfile;
use crate::types::Resource;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

pub const WEEKS_PER_MONTH: f64 = 365.25 / 7.0 / 12.0;
pub const DAYS_PER_MONTH: f64 = 365.25 / 12.0;
/// Fraction of heating/cooling energy saved per degree of set-point change.
pub const SAVING_PER_DEGREE: f64 = 0.06;
pub const APPROX_MARKER: &str = "approximately";

const DEFAULT_ANALOGIES: &str = include_str!("../../data/analogies.csv");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "amount")]
pub enum Delta {
    /// Minutes less per use (or per day for always-on appliances).
    Duration(f64),
    /// Fewer uses per week.
    Frequency(f64),
    /// Degrees Celsius of set-point change.
    Temperature(f64),
}

fn number_word(s: &str) -> Option<f64> {
    match s {
        "one" | "a" => Some(1.0),
        "two" => Some(2.0),
        "three" => Some(3.0),
        "four" => Some(4.0),
        "five" => Some(5.0),
        other => other.parse().ok(),
    }
}

/// Extract the parameterizable change from suggestion prose.
pub fn parse_delta(text: &str) -> Option<Delta> {
    static TEMP: OnceLock<Regex> = OnceLock::new();
    static FREQ: OnceLock<Regex> = OnceLock::new();
    static DUR: OnceLock<Regex> = OnceLock::new();
    let temp = TEMP.get_or_init(|| Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*(?:°\s*c\b|degrees?)").unwrap());
    let freq = FREQ.get_or_init(|| {
        Regex::new(r"(?i)\b(\d+(?:\.\d+)?|one|two|three|four|five)\s+fewer\b[^.;]*?\bper\s+(day|week)").unwrap()
    });
    let dur = DUR.get_or_init(|| {
        Regex::new(r"(?i)\b(\d+(?:\.\d+)?)\s*(seconds?|secs?|minutes?|mins?|hours?)\b").unwrap()
    });
    let lower = text.to_lowercase();
    if let Some(c) = temp.captures(&lower) {
        return c[1].parse().ok().map(Delta::Temperature);
    }
    if let Some(c) = freq.captures(&lower) {
        let n = number_word(&c[1])?;
        let per_week = if &c[2] == "day" { n * 7.0 } else { n };
        return Some(Delta::Frequency(per_week));
    }
    if let Some(c) = dur.captures(&lower) {
        let x: f64 = c[1].parse().ok()?;
        let minutes = match &c[2][..1] {
            "s" => x / 60.0,
            "h" => x * 60.0,
            _ => x,
        };
        return Some(Delta::Duration(minutes));
    }
    None
}

/// Round to `digits` significant figures.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32 - digits as i32 + 1;
    if exp >= 0 {
        let m = 10f64.powi(exp);
        (x / m).round() * m
    } else {
        let m = 10f64.powi(-exp);
        (x * m).round() / m
    }
}

pub fn format_quantity(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        let s = format!("{x:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saving {
    pub value: f64,
    /// Unit of `value`, per month.
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantScenario {
    pub suggestion_id: String,
    pub suggestion_text: String,
    pub behavior_delta: String,
    pub delta: Option<Delta>,
    /// Monthly saving rounded to at most two significant figures; `None`
    /// for qualitative scenarios.
    pub estimated_saving: Option<Saving>,
    pub analogy: Option<String>,
    pub approximate_flag: bool,
    pub prose: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogyRow {
    pub resource: Resource,
    pub low: f64,
    pub high: f64,
    pub unit_amount: f64,
    /// Prose with a `{n}` placeholder.
    pub template: String,
}

#[derive(Debug, Error)]
pub enum AnalogyError {
    #[error("analogy table: {0}")]
    Csv(#[from] csv::Error),
    #[error("analogy table row {row}: {message}")]
    Invalid { row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogyTable {
    rows: Vec<AnalogyRow>,
}

impl Default for AnalogyTable {
    fn default() -> Self {
        AnalogyTable::from_csv(DEFAULT_ANALOGIES).expect("bundled analogy table is valid")
    }
}

impl AnalogyTable {
    pub fn from_csv(text: &str) -> Result<Self, AnalogyError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, row) in rdr.deserialize::<AnalogyRow>().enumerate() {
            let row = row?;
            if !(row.high > row.low) || !(row.unit_amount > 0.0) || !row.template.contains("{n}") {
                return Err(AnalogyError::Invalid {
                    row: i + 1,
                    message: "need low < high, unit_amount > 0 and a {n} placeholder".into(),
                });
            }
            rows.push(row);
        }
        Ok(AnalogyTable { rows })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, AnalogyError> {
        let text = std::fs::read_to_string(path).map_err(|e| AnalogyError::Csv(e.into()))?;
        Self::from_csv(&text)
    }

    /// Row whose bracket contains `quantity`, else the nearest bracket.
    pub fn row_for(&self, resource: Resource, quantity: f64) -> Option<&AnalogyRow> {
        let distance = |r: &AnalogyRow| {
            if quantity < r.low {
                r.low - quantity
            } else if quantity >= r.high {
                quantity - r.high
            } else {
                0.0
            }
        };
        self.rows
            .iter()
            .filter(|r| r.resource == resource)
            .min_by(|a, b| distance(a).total_cmp(&distance(b)))
    }

    pub fn describe(&self, resource: Resource, quantity: f64) -> Option<String> {
        if quantity == 0.0 {
            return Some("no change".to_string());
        }
        let row = self.row_for(resource, quantity)?;
        let n = round_sig(quantity / row.unit_amount, 2);
        Some(row.template.replace("{n}", &format_quantity(n)))
    }
}

fn describe_delta(delta: Delta, appliance: &str, resource: Resource) -> String {
    let shower = resource == Resource::HotWater;
    match delta {
        Delta::Duration(min) => {
            let amount = if min < 1.0 || (min - min.round()).abs() > 1e-9 {
                format!("{} seconds", format_quantity(min * 60.0))
            } else {
                format!("{} minutes", format_quantity(min))
            };
            if shower {
                format!("shorten each shower by {amount}")
            } else {
                format!("use the {appliance} {amount} less each day")
            }
        }
        Delta::Frequency(n) => {
            if shower {
                format!("take {} fewer long showers per week", format_quantity(n))
            } else {
                format!("use the {appliance} {} fewer times per week", format_quantity(n))
            }
        }
        Delta::Temperature(d) => format!("adjust the {appliance} set point by {} °C", format_quantity(d)),
    }
}

/// Raw monthly saving for a delta; `None` if the combination is not quantifiable.
pub fn monthly_saving(delta: Delta, appliance: &str, resource: Resource, profile: &ParticipantProfile) -> Option<f64> {
    let u = &profile.usage;
    match (resource, delta) {
        (Resource::HotWater, Delta::Duration(min)) => {
            Some(min * u.shower_flow_lpm * u.showers_per_week * WEEKS_PER_MONTH)
        }
        (Resource::HotWater, Delta::Frequency(n)) => {
            Some(n * u.shower_minutes * u.shower_flow_lpm * WEEKS_PER_MONTH)
        }
        (Resource::HotWater, Delta::Temperature(_)) => None,
        (Resource::Electricity, Delta::Duration(min)) => {
            let a = nominal_usage(appliance);
            Some(min / 60.0 * a.power_kw * DAYS_PER_MONTH)
        }
        (Resource::Electricity, Delta::Frequency(n)) => {
            let a = nominal_usage(appliance);
            Some(n * a.hours_per_use * a.power_kw * WEEKS_PER_MONTH)
        }
        (Resource::Electricity, Delta::Temperature(d)) => {
            let a = nominal_usage(appliance);
            Some(d * SAVING_PER_DEGREE * a.power_kw * a.hours_per_day * DAYS_PER_MONTH)
        }
    }
}

fn qualitative(s: &Candidate) -> QuantScenario {
    let behavior_delta = s.text.trim_end_matches('.').to_string();
    QuantScenario {
        suggestion_id: s.id.clone(),
        suggestion_text: s.text.clone(),
        prose: format!("{behavior_delta}. The saving depends on your routine and is hard to pin down, but every bit counts."),
        behavior_delta,
        delta: None,
        estimated_saving: None,
        analogy: None,
        approximate_flag: true,
    }
}

/// Stage 3: turn a selected suggestion into a quantitative scenario.
pub fn stage3_quantify(s: &Candidate, profile: &ParticipantProfile, analogies: &AnalogyTable) -> QuantScenario {
    let Some(delta) = parse_delta(&s.text) else {
        return qualitative(s);
    };
    let Some(raw) = monthly_saving(delta, &s.appliance, s.resource, profile) else {
        return qualitative(s);
    };
    let raw = raw.max(0.0);
    let value = round_sig(raw, 2);
    let unit = s.resource.saving_unit();
    let behavior_delta = describe_delta(delta, &s.appliance, s.resource);
    let analogy = analogies.describe(s.resource, value);
    let coarse = round_sig(value, 1);
    let noun = match s.resource {
        Resource::HotWater => "of water",
        Resource::Electricity => "of electricity",
    };
    let prose = if value == 0.0 {
        format!("If you {behavior_delta}, your usage would stay approximately the same (no change).")
    } else {
        let mut p = format!(
            "If you {behavior_delta}, you would save {APPROX_MARKER} {} {unit} {noun} per month",
            format_quantity(coarse)
        );
        if let Some(a) = &analogy {
            p.push_str(", about ");
            p.push_str(a);
        }
        p.push('.');
        p
    };
    QuantScenario {
        suggestion_id: s.id.clone(),
        suggestion_text: s.text.clone(),
        behavior_delta,
        delta: Some(delta),
        estimated_saving: Some(Saving { value, unit: format!("{unit}/month") }),
        analogy,
        approximate_flag: true,
        prose,
    }
}
