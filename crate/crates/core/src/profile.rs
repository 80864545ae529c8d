//! Participant profile packages and their round-by-round updates.

use crate::types::Resource;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

pub const SNAPSHOT_VERSION: u32 = 1;
pub const PSYCH_MIN: f64 = 1.0;
pub const PSYCH_MAX: f64 = 5.0;

/// Baseline pro-conservation psychological profile on 5-point scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsychScores {
    pub self_efficacy: f64,
    pub outcome_expectations: f64,
    pub perceived_impediments: f64,
    pub attitude: f64,
    pub neighborhood_perception: f64,
}

impl PsychScores {
    pub const NAMES: [&'static str; 5] = [
        "self_efficacy",
        "outcome_expectations",
        "perceived_impediments",
        "attitude",
        "neighborhood_perception",
    ];

    pub fn uniform(v: f64) -> Self {
        Self::from_array([v; 5])
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        PsychScores {
            self_efficacy: a[0],
            outcome_expectations: a[1],
            perceived_impediments: a[2],
            attitude: a[3],
            neighborhood_perception: a[4],
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.self_efficacy,
            self.outcome_expectations,
            self.perceived_impediments,
            self.attitude,
            self.neighborhood_perception,
        ]
    }

    pub fn mean(&self) -> f64 {
        self.as_array().iter().sum::<f64>() / 5.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sociodemographics {
    /// Thousand RMB per month.
    pub living_budget: f64,
    pub gender: Gender,
    pub bill_experience: bool,
}

/// One day of metered use; `value: None` marks a gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyValue {
    pub day: u32,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionHistory {
    pub electricity: Vec<DailyValue>,
    pub hot_water: Vec<DailyValue>,
}

impl ConsumptionHistory {
    pub fn series(&self, resource: Resource) -> &[DailyValue] {
        match resource {
            Resource::Electricity => &self.electricity,
            Resource::HotWater => &self.hot_water,
        }
    }

    fn series_mut(&mut self, resource: Resource) -> &mut Vec<DailyValue> {
        match resource {
            Resource::Electricity => &mut self.electricity,
            Resource::HotWater => &mut self.hot_water,
        }
    }

    pub fn len(&self) -> usize {
        self.electricity.len() + self.hot_water.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Habit parameters used to turn behavioural deltas into quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsageParameters {
    pub shower_flow_lpm: f64,
    pub showers_per_week: f64,
    pub shower_minutes: f64,
}

impl Default for UsageParameters {
    fn default() -> Self {
        UsageParameters { shower_flow_lpm: 8.0, showers_per_week: 5.0, shower_minutes: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveredSuggestion {
    /// Library or generated id.
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveredRound {
    pub round: u32,
    pub suggestions: Vec<DeliveredSuggestion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub round: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub participant_id: String,
    pub psych: PsychScores,
    pub socio: Sociodemographics,
    pub appliance_inventory: Vec<String>,
    #[serde(default)]
    pub usage: UsageParameters,
    pub history: ConsumptionHistory,
    pub prior_suggestions: Vec<DeliveredRound>,
    pub feedback_log: Vec<FeedbackEntry>,
    pub summary: String,
    /// Last round folded into this profile (0 before the first nudge).
    pub round: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("participant {participant}: expected round {expected}, got {got}")]
    Sequencing { participant: String, expected: u32, got: u32 },
    #[error("participant {participant}: {message}")]
    Validation { participant: String, message: String },
}

/// New observations and events for one round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundData {
    pub round: u32,
    pub consumption: Vec<(Resource, DailyValue)>,
    pub feedback: Option<String>,
    pub delivered: Vec<DeliveredSuggestion>,
}

impl ParticipantProfile {
    pub fn new(
        participant_id: impl Into<String>,
        psych: PsychScores,
        socio: Sociodemographics,
        appliance_inventory: Vec<String>,
    ) -> Self {
        ParticipantProfile {
            participant_id: participant_id.into(),
            psych,
            socio,
            appliance_inventory,
            usage: UsageParameters::default(),
            history: ConsumptionHistory::default(),
            prior_suggestions: Vec::new(),
            feedback_log: Vec::new(),
            summary: String::new(),
            round: 0,
        }
    }

    pub fn mean_psych(&self) -> f64 {
        self.psych.mean()
    }

    fn invalid(&self, message: impl Into<String>) -> ProfileError {
        ProfileError::Validation { participant: self.participant_id.clone(), message: message.into() }
    }

    /// Append baseline observations without advancing the round counter.
    pub fn with_history(mut self, resource: Resource, values: &[DailyValue]) -> Result<Self, ProfileError> {
        for v in values {
            self.push_value(resource, *v)?;
        }
        Ok(self)
    }

    fn push_value(&mut self, resource: Resource, v: DailyValue) -> Result<(), ProfileError> {
        if let Some(x) = v.value {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(self.invalid(format!("negative or non-finite {resource} value {x} on day {}", v.day)));
            }
        }
        if let Some(last) = self.history.series(resource).last() {
            if v.day <= last.day {
                return Err(self.invalid(format!("{resource} day {} not after day {}", v.day, last.day)));
            }
        }
        self.history.series_mut(resource).push(v);
        Ok(())
    }

    /// Fold one round into a new profile value; `self` is left untouched.
    pub fn update(&self, data: &RoundData, new_summary: &str) -> Result<ParticipantProfile, ProfileError> {
        let expected = self.round + 1;
        if data.round != expected {
            return Err(ProfileError::Sequencing {
                participant: self.participant_id.clone(),
                expected,
                got: data.round,
            });
        }
        let mut next = self.clone();
        for (resource, v) in &data.consumption {
            next.push_value(*resource, *v)?;
        }
        next.prior_suggestions.push(DeliveredRound { round: data.round, suggestions: data.delivered.clone() });
        if let Some(text) = data.feedback.as_deref().filter(|t| !t.trim().is_empty()) {
            next.feedback_log.push(FeedbackEntry { round: data.round, text: text.to_string() });
        }
        next.summary = new_summary.to_string();
        next.round = data.round;
        Ok(next)
    }

    /// Suggestion ids delivered in round `round`.
    pub fn delivered_ids(&self, round: u32) -> Vec<&str> {
        self.prior_suggestions
            .iter()
            .filter(|d| d.round == round)
            .flat_map(|d| d.suggestions.iter().map(|s| s.id.as_str()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        for (name, v) in PsychScores::NAMES.iter().zip(self.psych.as_array()) {
            if !(PSYCH_MIN..=PSYCH_MAX).contains(&v) {
                return Err(self.invalid(format!("{name} = {v} outside [1, 5]")));
            }
        }
        if !(self.socio.living_budget >= 0.0) {
            return Err(self.invalid("negative living budget"));
        }
        for resource in Resource::ALL {
            let series = self.history.series(resource);
            for w in series.windows(2) {
                if w[1].day <= w[0].day {
                    return Err(self.invalid(format!("{resource} days not strictly increasing")));
                }
            }
            if series.iter().any(|d| d.value.is_some_and(|x| !(x >= 0.0))) {
                return Err(self.invalid(format!("negative {resource} value")));
            }
        }
        for w in self.prior_suggestions.windows(2) {
            if w[1].round <= w[0].round {
                return Err(self.invalid("prior suggestion rounds not strictly increasing"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unsupported snapshot version {version}")]
    Version { line: usize, version: u32 },
}

#[derive(Serialize, Deserialize)]
struct SnapshotLine<P> {
    version: u32,
    round: u32,
    profile: P,
}

/// Write one snapshot line per profile.
pub fn write_snapshots<W: Write>(mut out: W, profiles: &[ParticipantProfile]) -> Result<(), SnapshotError> {
    for p in profiles {
        let line = SnapshotLine { version: SNAPSHOT_VERSION, round: p.round, profile: p };
        serde_json::to_writer(&mut out, &line).map_err(|e| SnapshotError::Parse { line: 0, message: e.to_string() })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_snapshots<R: BufRead>(reader: R) -> Result<Vec<ParticipantProfile>, SnapshotError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| SnapshotError::Parse { line: i + 1, message: e.to_string() };
        let head: SnapshotLine<serde_json::Value> = serde_json::from_str(&line).map_err(parse_err)?;
        if head.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version { line: i + 1, version: head.version });
        }
        out.push(serde_json::from_value(head.profile).map_err(parse_err)?);
    }
    Ok(out)
}

pub fn save_snapshots(path: impl AsRef<Path>, profiles: &[ParticipantProfile]) -> Result<(), SnapshotError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_snapshots(&mut w, profiles)?;
    w.flush()?;
    Ok(())
}

pub fn load_snapshots(path: impl AsRef<Path>) -> Result<Vec<ParticipantProfile>, SnapshotError> {
    let file = std::fs::File::open(path)?;
    read_snapshots(std::io::BufReader::new(file))
}
