//! Deny-list screening of personalized suggestions.
//!
//! Flagged suggestions are withheld and replaced by the next-ranked pool
//! candidate of the same resource. Surviving text is never edited.

use super::bundle::NudgeBundle;
use super::scenario::{parse_delta, stage3_quantify, AnalogyTable, Delta};
use super::select::{Candidate, CandidatePool};
use super::AgentError;
use crate::profile::ParticipantProfile;
use crate::types::Resource;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Fewest showers per week a suggestion may leave.
pub const MIN_SHOWERS_PER_WEEK: f64 = 3.0;
/// Shortest shower, in minutes, a suggestion may leave.
pub const MIN_SHOWER_MINUTES: f64 = 4.0;
/// Acceptable room set-point range, °C.
pub const SETPOINT_RANGE: (f64, f64) = (16.0, 30.0);
/// Largest set-point shift, °C.
pub const MAX_SETPOINT_SHIFT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    Hygiene,
    Tampering,
    ExtremeTemperature,
    FoodSafety,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyFlag {
    pub suggestion_id: String,
    pub resource: Resource,
    pub risk: RiskKind,
    pub reason: String,
    pub replaced_by: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SafetyScreen {
    patterns: Vec<(RiskKind, Regex)>,
    temperature: Regex,
}

impl Default for SafetyScreen {
    fn default() -> Self {
        let p = |kind, re: &str| (kind, Regex::new(re).expect("valid deny pattern"));
        SafetyScreen {
            patterns: vec![
                p(
                    RiskKind::Hygiene,
                    r"(?i)\b(skip|stop|avoid|give up|quit)\w*\s+(\w+\s+)?(showers?|showering|bathing|washing|brushing)\b",
                ),
                p(RiskKind::Hygiene, r"(?i)\bno (more )?(showers?|bathing|washing)\b"),
                p(RiskKind::Hygiene, r"(?i)\bshowers?\s+(only\s+)?once\s+(a|per|every)\s+(week|fortnight|month)\b"),
                p(RiskKind::Hygiene, r"(?i)\b(without|skip(ping)?)\s+soap\b"),
                p(
                    RiskKind::Tampering,
                    r"(?i)\b(tamper\w*|bypass\w*|rewir\w*|disconnect\w*|disabl\w*|modif\w*|open(ing)?\s+up)\b[^.]*\b(meter|thermostat|water heater|boiler|breaker|circuit|wiring|fuse|valve|safety)\b",
                ),
                p(RiskKind::Tampering, r"(?i)\b(meter|thermostat|breaker|fuse)\b[^.]*\b(tamper\w*|bypass\w*|rewir\w*|disconnect\w*)\b"),
                p(
                    RiskKind::FoodSafety,
                    r"(?i)\b(unplug|switch(ing)? off|turn(ing)? off|shut(ting)? off)\s+(the\s+|your\s+)?(fridge|refrigerator|freezer)\b",
                ),
                p(RiskKind::ExtremeTemperature, r"(?i)\bcold showers?\b[^.]*\b(winter|every day|always)\b"),
            ],
            temperature: Regex::new(r"(?i)(-?\d+(?:\.\d+)?)\s*(?:°\s*c\b|degrees?)").expect("valid"),
        }
    }
}

impl SafetyScreen {
    /// First deny reason for a suggestion, if any.
    pub fn check(&self, c: &Candidate, profile: &ParticipantProfile) -> Option<(RiskKind, String)> {
        for (kind, re) in &self.patterns {
            if let Some(m) = re.find(&c.text) {
                return Some((*kind, format!("matches `{}`", m.as_str())));
            }
        }
        for cap in self.temperature.captures_iter(&c.text) {
            let Ok(t) = cap[1].parse::<f64>() else { continue };
            // Small numbers are shifts, larger ones absolute set points.
            let bad = if t.abs() <= 2.0 * MAX_SETPOINT_SHIFT {
                t.abs() > MAX_SETPOINT_SHIFT
            } else {
                t < SETPOINT_RANGE.0 || t > SETPOINT_RANGE.1
            };
            if bad && c.resource == Resource::Electricity {
                return Some((RiskKind::ExtremeTemperature, format!("temperature {t} °C out of bounds")));
            }
        }
        if c.resource == Resource::HotWater {
            let u = &profile.usage;
            match parse_delta(&c.text) {
                Some(Delta::Frequency(n)) if u.showers_per_week - n < MIN_SHOWERS_PER_WEEK => {
                    return Some((RiskKind::Hygiene, format!("leaves {} showers per week", u.showers_per_week - n)));
                }
                Some(Delta::Duration(m)) if u.shower_minutes - m < MIN_SHOWER_MINUTES => {
                    return Some((RiskKind::Hygiene, format!("leaves {:.1}-minute showers", u.shower_minutes - m)));
                }
                _ => {}
            }
        }
        None
    }
}

/// What screening may draw on when replacing a flagged suggestion.
pub struct ScreenContext<'a> {
    pub pool: &'a CandidatePool,
    /// Ids delivered in the previous round.
    pub excluded: &'a BTreeSet<String>,
    pub profile: &'a ParticipantProfile,
    pub analogies: &'a AnalogyTable,
}

/// Withhold risky suggestions, refilling from the ranked pool.
pub fn safety_screen(
    screen: &SafetyScreen,
    bundle: &NudgeBundle,
    ctx: &ScreenContext<'_>,
) -> Result<(NudgeBundle, Vec<SafetyFlag>), AgentError> {
    let mut out = bundle.clone();
    let mut flags = Vec::new();
    let mut rejected: BTreeSet<String> = BTreeSet::new();
    for i in 0..out.suggestions.len() {
        let current = out.suggestions[i].clone();
        let Some((risk, reason)) = screen.check(&current, ctx.profile) else { continue };
        rejected.insert(current.id.clone());
        let in_use: BTreeSet<String> = out.suggestions.iter().map(|s| s.id.clone()).collect();
        let mut replacement = None;
        for c in ctx.pool.get(current.resource) {
            if in_use.contains(&c.id) || rejected.contains(&c.id) || ctx.excluded.contains(&c.id) {
                continue;
            }
            match screen.check(c, ctx.profile) {
                Some(_) => {
                    rejected.insert(c.id.clone());
                }
                None => {
                    replacement = Some(c.clone());
                    break;
                }
            }
        }
        let Some(rep) = replacement else {
            return Err(AgentError::ScreeningExhausted { participant: bundle.participant_id.clone(), resource: current.resource });
        };
        flags.push(SafetyFlag {
            suggestion_id: current.id.clone(),
            resource: current.resource,
            risk,
            reason,
            replaced_by: Some(rep.id.clone()),
        });
        if i < out.scenarios.len() {
            out.scenarios[i] = stage3_quantify(&rep, ctx.profile, ctx.analogies);
        }
        out.suggestions[i] = rep;
    }
    Ok((out, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::bundle::tests::{cand, feedback, scen, t2_content};
    use crate::agent::bundle::assemble_bundle;
    use crate::profile::{Gender, PsychScores, Sociodemographics};
    use crate::types::Arm;

    fn profile() -> ParticipantProfile {
        ParticipantProfile::new(
            "P",
            PsychScores::uniform(3.0),
            Sociodemographics { living_budget: 2.0, gender: Gender::Male, bill_experience: true },
            vec![],
        )
    }

    fn pool_from(content: &[Candidate], extra: Vec<Candidate>) -> CandidatePool {
        let mut pool = CandidatePool::default();
        for c in content.iter().cloned().chain(extra) {
            match c.resource {
                Resource::Electricity => pool.electricity.push(c),
                Resource::HotWater => pool.hot_water.push(c),
            }
        }
        pool
    }

    #[test]
    fn benign_bundle_unchanged() {
        let b = assemble_bundle("P", 1, Arm::T2, feedback(), t2_content()).unwrap();
        let pool = pool_from(&b.suggestions, vec![]);
        let p = profile();
        let ctx = ScreenContext { pool: &pool, excluded: &BTreeSet::new(), profile: &p, analogies: &AnalogyTable::default() };
        let (screened, flags) = safety_screen(&SafetyScreen::default(), &b, &ctx).unwrap();
        assert!(flags.is_empty());
        assert_eq!(screened, b);
    }

    #[test]
    fn skip_showers_is_replaced_by_next_ranked() {
        let mut content = t2_content();
        content.suggestions[2] = cand("bad", Resource::HotWater, "Skip showers entirely on weekends.");
        content.scenarios[2] = scen(&content.suggestions[2]);
        let b = assemble_bundle("P", 1, Arm::T2, feedback(), content).unwrap();
        let backup = cand("w3", Resource::HotWater, "Shorten each shower by 30 seconds.");
        let pool = pool_from(&b.suggestions, vec![backup]);
        let p = profile();
        let ctx = ScreenContext { pool: &pool, excluded: &BTreeSet::new(), profile: &p, analogies: &AnalogyTable::default() };
        let (screened, flags) = safety_screen(&SafetyScreen::default(), &b, &ctx).unwrap();
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].risk, RiskKind::Hygiene);
        assert_eq!(flags[0].replaced_by.as_deref(), Some("w3"));
        assert_eq!(screened.suggestions[2].id, "w3");
        assert_eq!(screened.scenarios[2].suggestion_id, "w3");
        // survivors untouched
        assert_eq!(screened.suggestions[3], b.suggestions[3]);
        assert_eq!(screened.suggestions[0].text, b.suggestions[0].text);
    }

    #[test]
    fn all_flagged_is_exhausted() {
        let texts = ["Skip showers entirely.", "No more showers this week.", "Stop showering daily.", "Shower once a week."];
        let suggestions: Vec<Candidate> =
            texts.iter().enumerate().map(|(i, t)| cand(&format!("w{i}"), Resource::HotWater, t)).collect();
        let mut content = t2_content();
        content.suggestions[2] = suggestions[0].clone();
        content.suggestions[3] = suggestions[1].clone();
        content.scenarios = content.suggestions.iter().map(scen).collect();
        let b = assemble_bundle("P", 1, Arm::T2, feedback(), content).unwrap();
        let pool = pool_from(&b.suggestions[..2], suggestions);
        let p = profile();
        let ctx = ScreenContext { pool: &pool, excluded: &BTreeSet::new(), profile: &p, analogies: &AnalogyTable::default() };
        assert!(matches!(
            safety_screen(&SafetyScreen::default(), &b, &ctx),
            Err(AgentError::ScreeningExhausted { resource: Resource::HotWater, .. })
        ));
    }

    #[test]
    fn deny_list_examples() {
        let s = SafetyScreen::default();
        let p = profile();
        let e = |t: &str| cand("x", Resource::Electricity, t);
        let w = |t: &str| cand("x", Resource::HotWater, t);
        assert_eq!(s.check(&e("Unplug the refrigerator at night."), &p).unwrap().0, RiskKind::FoodSafety);
        assert_eq!(s.check(&e("Bypass the electricity meter."), &p).unwrap().0, RiskKind::Tampering);
        assert_eq!(s.check(&e("Set the air conditioner to 32 °C."), &p).unwrap().0, RiskKind::ExtremeTemperature);
        assert_eq!(s.check(&e("Raise the set point by 6 degrees."), &p).unwrap().0, RiskKind::ExtremeTemperature);
        assert!(s.check(&e("Set the air conditioner 2 °C warmer, e.g. 26 °C instead of 24 °C."), &p).is_none());
        assert!(s.check(&w("Take three fewer showers per week."), &p).is_some());
        assert!(s.check(&w("Shorten each shower by 8 minutes."), &p).is_some());
        assert!(s.check(&w("Shorten each shower by 90 seconds."), &p).is_none());
        assert!(s.check(&w("Take one fewer long shower per week."), &p).is_none());
    }
}
