//! Usage feedback: levels, trend and peer comparison over a day window.

use super::AgentError;
use crate::profile::{DailyValue, ParticipantProfile};
use crate::types::Resource;
use serde::{Deserialize, Serialize};

/// Nominal appliance draw used for breakdowns and savings estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalUsage {
    pub power_kw: f64,
    pub hours_per_day: f64,
    /// Hours of one use, for frequency-based deltas.
    pub hours_per_use: f64,
}

pub fn nominal_usage(appliance: &str) -> NominalUsage {
    let a = appliance.to_lowercase();
    let (power_kw, hours_per_day, hours_per_use) = if a.contains("air conditioner") {
        (1.0, 4.0, 2.0)
    } else if a.contains("heater") {
        (1.2, 3.0, 1.5)
    } else if a.contains("desktop") {
        (0.2, 5.0, 2.5)
    } else if a.contains("laptop") {
        (0.06, 6.0, 3.0)
    } else if a.contains("monitor") {
        (0.03, 5.0, 2.5)
    } else if a.contains("lamp") || a.contains("light") {
        (0.015, 5.0, 2.5)
    } else if a.contains("fan") {
        (0.05, 4.0, 2.0)
    } else if a.contains("kettle") {
        (1.5, 0.2, 0.05)
    } else if a.contains("hair dryer") {
        (1.2, 0.15, 0.15)
    } else if a.contains("charger") {
        (0.01, 3.0, 1.5)
    } else {
        (0.05, 2.0, 1.0)
    };
    NominalUsage { power_kw, hours_per_day, hours_per_use }
}

/// Half-open day range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayWindow {
    pub start: u32,
    pub end: u32,
}

impl DayWindow {
    pub fn contains(&self, day: u32) -> bool {
        day >= self.start && day < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Up,
    Down,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageFeedback {
    pub resource: Resource,
    pub total_since_last: f64,
    pub days_observed: usize,
    pub daily_mean: f64,
    pub trend: Trend,
    /// Second-half mean relative to first-half mean, in percent.
    pub percent_change: Option<f64>,
    /// Participant daily mean over peer-group daily mean.
    pub peer_ratio: f64,
    pub appliance_breakdown: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPair {
    pub electricity: UsageFeedback,
    pub hot_water: UsageFeedback,
}

impl FeedbackPair {
    pub fn get(&self, resource: Resource) -> &UsageFeedback {
        match resource {
            Resource::Electricity => &self.electricity,
            Resource::HotWater => &self.hot_water,
        }
    }
}

fn observed(series: &[DailyValue], window: DayWindow) -> Vec<f64> {
    series.iter().filter(|d| window.contains(d.day)).filter_map(|d| d.value).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Share of estimated appliance energy, from the nominal table.
pub fn appliance_breakdown(profile: &ParticipantProfile, resource: Resource) -> Vec<(String, f64)> {
    match resource {
        Resource::HotWater => vec![("shower".to_string(), 1.0)],
        Resource::Electricity => {
            let energy: Vec<(String, f64)> = profile
                .appliance_inventory
                .iter()
                .map(|a| {
                    let u = nominal_usage(a);
                    (a.clone(), u.power_kw * u.hours_per_day)
                })
                .collect();
            let total: f64 = energy.iter().map(|(_, e)| e).sum();
            if total <= 0.0 {
                return Vec::new();
            }
            energy.into_iter().map(|(a, e)| (a, e / total)).collect()
        }
    }
}

pub fn usage_feedback(
    profile: &ParticipantProfile,
    peers: &[&ParticipantProfile],
    resource: Resource,
    window: DayWindow,
) -> Result<UsageFeedback, AgentError> {
    let insufficient = |why: &str| AgentError::InsufficientData {
        participant: profile.participant_id.clone(),
        resource,
        message: why.to_string(),
    };
    if window.end <= window.start {
        return Err(insufficient("empty window"));
    }
    let values = observed(profile.history.series(resource), window);
    if values.is_empty() {
        return Err(insufficient("no observations in window"));
    }
    if peers.is_empty() {
        return Err(insufficient("empty peer group"));
    }
    let daily_mean = mean(&values);
    let peer_means: Vec<f64> = peers
        .iter()
        .map(|p| observed(p.history.series(resource), window))
        .filter(|v| !v.is_empty())
        .map(|v| mean(&v))
        .collect();
    if peer_means.is_empty() {
        return Err(insufficient("no peer observations in window"));
    }
    let peer_mean = mean(&peer_means);
    if !(peer_mean > 0.0) || !(daily_mean > 0.0) {
        return Err(insufficient("zero consumption level; comparison undefined"));
    }

    let half = values.len() / 2;
    let (trend, percent_change) = if half == 0 {
        (Trend::Flat, None)
    } else {
        let first = mean(&values[..half]);
        let second = mean(&values[values.len() - half..]);
        let diff = second - first;
        let trend = if diff > 0.0 {
            Trend::Up
        } else if diff < 0.0 {
            Trend::Down
        } else {
            Trend::Flat
        };
        let pct = (first > 0.0).then(|| diff / first * 100.0);
        (trend, pct)
    };

    Ok(UsageFeedback {
        resource,
        total_since_last: values.iter().sum(),
        days_observed: values.len(),
        daily_mean,
        trend,
        percent_change,
        peer_ratio: daily_mean / peer_mean,
        appliance_breakdown: appliance_breakdown(profile, resource),
    })
}

/// Stage 1 for both resources.
pub fn stage1_usage_feedback(
    profile: &ParticipantProfile,
    peers: &[&ParticipantProfile],
    window: DayWindow,
) -> Result<FeedbackPair, AgentError> {
    Ok(FeedbackPair {
        electricity: usage_feedback(profile, peers, Resource::Electricity, window)?,
        hot_water: usage_feedback(profile, peers, Resource::HotWater, window)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{Gender, PsychScores, Sociodemographics};

    fn with_series(id: &str, elec: &[f64], water: &[f64]) -> ParticipantProfile {
        let p = ParticipantProfile::new(
            id,
            PsychScores::uniform(3.0),
            Sociodemographics { living_budget: 2.0, gender: Gender::Male, bill_experience: false },
            vec!["lamp".into(), "air conditioner".into()],
        );
        let to_days = |xs: &[f64]| -> Vec<DailyValue> {
            xs.iter().enumerate().map(|(i, &v)| DailyValue { day: i as u32, value: Some(v) }).collect()
        };
        p.with_history(Resource::Electricity, &to_days(elec))
            .unwrap()
            .with_history(Resource::HotWater, &to_days(water))
            .unwrap()
    }

    const W: DayWindow = DayWindow { start: 0, end: 6 };

    #[test]
    fn trend_up_hundred_percent() {
        let p = with_series("a", &[2.0, 2.0, 2.0, 4.0, 4.0, 4.0], &[30.0; 6]);
        let fb = usage_feedback(&p, &[&p], Resource::Electricity, W).unwrap();
        assert_eq!(fb.trend, Trend::Up);
        assert!((fb.percent_change.unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(fb.total_since_last, 18.0);
    }

    #[test]
    fn self_comparison_is_unit_ratio_and_flat() {
        let p = with_series("a", &[3.0; 6], &[30.0; 6]);
        let pair = stage1_usage_feedback(&p, &[&p], W).unwrap();
        assert_eq!(pair.electricity.peer_ratio, 1.0);
        assert_eq!(pair.electricity.trend, Trend::Flat);
        assert_eq!(pair.hot_water.peer_ratio, 1.0);
    }

    #[test]
    fn equal_means_unit_ratio() {
        let p = with_series("a", &[2.0, 4.0, 2.0, 4.0, 2.0, 4.0], &[30.0; 6]);
        let q = with_series("b", &[3.0; 6], &[30.0; 6]);
        let fb = usage_feedback(&p, &[&q], Resource::Electricity, W).unwrap();
        assert!((fb.peer_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_window_is_insufficient_data() {
        let p = with_series("a", &[3.0; 6], &[30.0; 6]);
        let empty = DayWindow { start: 3, end: 3 };
        assert!(matches!(
            usage_feedback(&p, &[&p], Resource::Electricity, empty),
            Err(AgentError::InsufficientData { .. })
        ));
        let later = DayWindow { start: 10, end: 17 };
        assert!(usage_feedback(&p, &[&p], Resource::Electricity, later).is_err());
    }

    #[test]
    fn breakdown_shares_sum_to_one() {
        let p = with_series("a", &[3.0; 6], &[30.0; 6]);
        let fb = usage_feedback(&p, &[&p], Resource::Electricity, W).unwrap();
        let total: f64 = fb.appliance_breakdown.iter().map(|(_, s)| s).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
