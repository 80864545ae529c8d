//! Per-round deliverables and their contract checks.

use super::feedback::FeedbackPair;
use super::scenario::{QuantScenario, APPROX_MARKER};
use super::select::Candidate;
use super::AgentError;
use crate::types::{Arm, Resource};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};

pub const SUGGESTIONS_PER_RESOURCE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    TextLink,
    ImageReport,
}

impl ReportFormat {
    pub fn for_arm(arm: Arm) -> Self {
        match arm {
            Arm::C => ReportFormat::TextLink,
            Arm::T1 | Arm::T2 => ReportFormat::ImageReport,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NudgeBundle {
    pub participant_id: String,
    pub round: u32,
    pub arm: Arm,
    pub format: ReportFormat,
    pub feedback: FeedbackPair,
    pub suggestions: Vec<Candidate>,
    pub scenarios: Vec<QuantScenario>,
    pub new_summary: Option<String>,
}

/// Personalized content produced by stages 2 and 3.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersonalContent {
    pub suggestions: Vec<Candidate>,
    pub scenarios: Vec<QuantScenario>,
    pub new_summary: Option<String>,
}

impl PersonalContent {
    fn is_empty(&self) -> bool {
        self.suggestions.is_empty() && self.scenarios.is_empty() && self.new_summary.is_none()
    }
}

pub fn assemble_bundle(
    participant_id: &str,
    round: u32,
    arm: Arm,
    feedback: FeedbackPair,
    content: PersonalContent,
) -> Result<NudgeBundle, AgentError> {
    if arm != Arm::T2 && !content.is_empty() {
        return Err(AgentError::Assembly(format!("arm {arm} carries feedback only, got personalized content")));
    }
    let bundle = NudgeBundle {
        participant_id: participant_id.to_string(),
        round,
        arm,
        format: ReportFormat::for_arm(arm),
        feedback,
        suggestions: content.suggestions,
        scenarios: content.scenarios,
        new_summary: content.new_summary,
    };
    check_invariants(&bundle).map_err(AgentError::Assembly)?;
    Ok(bundle)
}

/// Structural contract of a bundle.
pub fn check_invariants(b: &NudgeBundle) -> Result<(), String> {
    if b.format != ReportFormat::for_arm(b.arm) {
        return Err(format!("arm {} must use {:?}", b.arm, ReportFormat::for_arm(b.arm)));
    }
    if b.arm != Arm::T2 {
        if !b.suggestions.is_empty() || !b.scenarios.is_empty() || b.new_summary.is_some() {
            return Err(format!("arm {} must not carry personalized content", b.arm));
        }
        return Ok(());
    }
    for r in Resource::ALL {
        let n = b.suggestions.iter().filter(|s| s.resource == r).count();
        if n != SUGGESTIONS_PER_RESOURCE {
            return Err(format!("T2 bundle has {n} {r} suggestions, expected {SUGGESTIONS_PER_RESOURCE}"));
        }
    }
    let ids: BTreeSet<&str> = b.suggestions.iter().map(|s| s.id.as_str()).collect();
    if ids.len() != b.suggestions.len() {
        return Err("duplicate suggestion in bundle".into());
    }
    if b.scenarios.len() != b.suggestions.len() {
        return Err(format!("{} scenarios for {} suggestions", b.scenarios.len(), b.suggestions.len()));
    }
    for (s, q) in b.suggestions.iter().zip(&b.scenarios) {
        if q.suggestion_id != s.id {
            return Err(format!("scenario `{}` does not belong to suggestion `{}`", q.suggestion_id, s.id));
        }
        if !q.approximate_flag {
            return Err(format!("scenario `{}` not flagged approximate", q.suggestion_id));
        }
        if let Some(saving) = &q.estimated_saving {
            if !(saving.value >= 0.0) {
                return Err(format!("scenario `{}` has negative saving", q.suggestion_id));
            }
            if !q.prose.contains(APPROX_MARKER) {
                return Err(format!("scenario `{}` prose lacks the approximation marker", q.suggestion_id));
            }
            if q.analogy.as_deref().is_none_or(str::is_empty) {
                return Err(format!("scenario `{}` has an estimate but no analogy", q.suggestion_id));
            }
        }
    }
    if b.new_summary.as_deref().is_none_or(|s| s.trim().is_empty()) {
        return Err("T2 bundle lacks an updated summary".into());
    }
    Ok(())
}

/// Plain-text rendering of a bundle as the participant reads it.
pub fn render_text(b: &NudgeBundle) -> String {
    let mut out = Vec::new();
    for r in Resource::ALL {
        let f = b.feedback.get(r);
        let unit = match r {
            Resource::Electricity => "kWh",
            Resource::HotWater => "L",
        };
        let comparison = if f.peer_ratio > 1.0 {
            format!("{:.0}% more than comparable participants", (f.peer_ratio - 1.0) * 100.0)
        } else if f.peer_ratio < 1.0 {
            format!("{:.0}% less than comparable participants", (1.0 - f.peer_ratio) * 100.0)
        } else {
            "the same as comparable participants".to_string()
        };
        out.push(format!("Your {r} use last week averaged {:.2} {unit} per day, {comparison}.", f.daily_mean));
        let trend = match (f.trend, f.percent_change) {
            (super::feedback::Trend::Up, Some(p)) => format!("Your use went up by {:.0}% over the week.", p.abs()),
            (super::feedback::Trend::Down, Some(p)) => format!("Your use went down by {:.0}% over the week.", p.abs()),
            _ => "Your use stayed about the same over the week.".to_string(),
        };
        out.push(trend);
        if let Some((a, share)) = f.appliance_breakdown.iter().max_by(|x, y| x.1.total_cmp(&y.1)) {
            if r == Resource::Electricity {
                out.push(format!("Your {a} accounts for about {:.0}% of your electricity.", share * 100.0));
            }
        }
    }
    for (s, q) in b.suggestions.iter().zip(&b.scenarios) {
        out.push(s.text.clone());
        out.push(q.prose.clone());
    }
    out.join(" ")
}

pub fn write_bundles<W: Write>(mut out: W, bundles: &[NudgeBundle]) -> std::io::Result<()> {
    for b in bundles {
        serde_json::to_writer(&mut out, b)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_bundles<R: BufRead>(reader: R) -> std::io::Result<Vec<NudgeBundle>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let b = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bundle line {}: {e}", i + 1))
        })?;
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::agent::feedback::{Trend, UsageFeedback};
    use crate::agent::scenario::Saving;
    use crate::agent::select::Origin;
    use crate::knowledge::Strategy;

    pub(crate) fn feedback() -> FeedbackPair {
        let fb = |resource| UsageFeedback {
            resource,
            total_since_last: 21.0,
            days_observed: 7,
            daily_mean: 3.0,
            trend: Trend::Flat,
            percent_change: Some(0.0),
            peer_ratio: 1.0,
            appliance_breakdown: vec![],
        };
        FeedbackPair { electricity: fb(Resource::Electricity), hot_water: fb(Resource::HotWater) }
    }

    pub(crate) fn cand(id: &str, resource: Resource, text: &str) -> Candidate {
        Candidate {
            id: id.into(),
            resource,
            appliance: "shower".into(),
            behavior_type: "showering".into(),
            strategy: Strategy::DurationControl,
            text: text.into(),
            origin: Origin::Retrieved,
            retrieval_score: Some(1),
        }
    }

    pub(crate) fn scen(c: &Candidate) -> QuantScenario {
        QuantScenario {
            suggestion_id: c.id.clone(),
            suggestion_text: c.text.clone(),
            behavior_delta: "x".into(),
            delta: None,
            estimated_saving: Some(Saving { value: 10.0, unit: "L/month".into() }),
            analogy: Some("a".into()),
            approximate_flag: true,
            prose: "save approximately 10 L".into(),
        }
    }

    pub(crate) fn t2_content() -> PersonalContent {
        let suggestions = vec![
            cand("e1", Resource::Electricity, "a"),
            cand("e2", Resource::Electricity, "b"),
            cand("w1", Resource::HotWater, "c"),
            cand("w2", Resource::HotWater, "d"),
        ];
        let scenarios = suggestions.iter().map(scen).collect();
        PersonalContent { suggestions, scenarios, new_summary: Some("s".into()) }
    }

    #[test]
    fn control_with_suggestions_is_rejected() {
        let err = assemble_bundle("P", 1, Arm::C, feedback(), t2_content()).unwrap_err();
        assert!(matches!(err, AgentError::Assembly(_)));
    }

    #[test]
    fn t2_with_two_plus_two_is_valid() {
        let b = assemble_bundle("P", 1, Arm::T2, feedback(), t2_content()).unwrap();
        assert_eq!(b.format, ReportFormat::ImageReport);
    }

    #[test]
    fn t1_is_image_report_without_suggestions() {
        let b = assemble_bundle("P", 1, Arm::T1, feedback(), PersonalContent::default()).unwrap();
        assert_eq!(b.format, ReportFormat::ImageReport);
        assert!(b.suggestions.is_empty());
        let c = assemble_bundle("P", 1, Arm::C, feedback(), PersonalContent::default()).unwrap();
        assert_eq!(c.format, ReportFormat::TextLink);
    }

    #[test]
    fn t2_with_three_suggestions_is_rejected() {
        let mut content = t2_content();
        content.suggestions.pop();
        content.scenarios.pop();
        assert!(assemble_bundle("P", 1, Arm::T2, feedback(), content).is_err());
    }

    #[test]
    fn bundles_round_trip() {
        let b = assemble_bundle("P", 2, Arm::T2, feedback(), t2_content()).unwrap();
        let mut buf = Vec::new();
        write_bundles(&mut buf, std::slice::from_ref(&b)).unwrap();
        assert_eq!(read_bundles(&buf[..]).unwrap(), vec![b]);
    }
}
