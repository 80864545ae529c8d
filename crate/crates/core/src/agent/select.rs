//! Profile reasoning and suggestion selection.

use super::backend::{self, field, Fields, GenerationBackend, TASK, TASK_GENERATE, TASK_RANK, TASK_SUMMARIZE};
use super::feedback::{FeedbackPair, UsageFeedback};
use super::AgentError;
use crate::knowledge::{behavior_tag_for, tokens, Library, ProfileQuery, Strategy, SuggestionRecord};
use crate::profile::ParticipantProfile;
use crate::types::Resource;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const RETRIEVED_PER_RESOURCE: usize = 2;
pub const GENERATED_PER_RESOURCE: usize = 2;
pub const SELECTED_PER_RESOURCE: usize = 2;
/// Impact assigned to an appliance absent from the usage breakdown.
pub const UNLISTED_SHARE: f64 = 0.05;

pub const SUMMARY_FIELDS: [&str; 4] =
    ["habits_traits", "likely_adoption", "largest_savings", "prior_effectiveness"];

/// Feasibility weight of a strategy for the template ranking.
pub fn feasibility(strategy: Strategy) -> f64 {
    match strategy {
        Strategy::DurationControl | Strategy::FrequencyReduction => 3.0,
        Strategy::TemperatureAdjustment | Strategy::BehaviorModeChange => 2.0,
        Strategy::MonitoringFeedback => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Retrieved,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub resource: Resource,
    pub appliance: String,
    pub behavior_type: String,
    pub strategy: Strategy,
    pub text: String,
    pub origin: Origin,
    pub retrieval_score: Option<u32>,
}

impl Candidate {
    fn from_record(r: &SuggestionRecord, score: u32) -> Self {
        Candidate {
            id: r.id.clone(),
            resource: r.resource,
            appliance: r.appliance.clone(),
            behavior_type: r.behavior_type.clone(),
            strategy: r.strategy,
            text: r.text.clone(),
            origin: Origin::Retrieved,
            retrieval_score: Some(score),
        }
    }
}

/// Id of a backend-generated suggestion; stable across rounds.
pub fn generated_id(resource: Resource, appliance: &str, strategy: Strategy) -> String {
    let slug: Vec<String> = tokens(appliance).collect();
    format!("gen:{}:{}:{}", resource, slug.join("-"), strategy)
}

/// Ranked candidates per resource.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub electricity: Vec<Candidate>,
    pub hot_water: Vec<Candidate>,
}

impl CandidatePool {
    pub fn get(&self, resource: Resource) -> &[Candidate] {
        match resource {
            Resource::Electricity => &self.electricity,
            Resource::HotWater => &self.hot_water,
        }
    }

    fn get_mut(&mut self, resource: Resource) -> &mut Vec<Candidate> {
        match resource {
            Resource::Electricity => &mut self.electricity,
            Resource::HotWater => &mut self.hot_water,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Output {
    /// Two per resource, electricity first.
    pub selected: Vec<Candidate>,
    pub pool: CandidatePool,
    pub new_summary: String,
}

/// Retrieval query: appliances, their behaviour tags, and summary keywords.
pub fn profile_query(profile: &ParticipantProfile, summary: &str) -> ProfileQuery {
    const STOP: [&str; 12] =
        ["with", "that", "this", "from", "have", "been", "were", "your", "they", "their", "than", "most"];
    let mut appliances = profile.appliance_inventory.clone();
    appliances.push("shower".to_string());
    let behavior_tags: BTreeSet<String> = appliances.iter().map(|a| behavior_tag_for(a).to_string()).collect();
    let mut text = summary.to_string();
    for f in &profile.feedback_log {
        text.push(' ');
        text.push_str(&f.text);
    }
    let keywords: BTreeSet<String> =
        tokens(&text).filter(|t| t.len() >= 4 && !STOP.contains(&t.as_str())).collect();
    ProfileQuery { appliances, behavior_tags: behavior_tags.into_iter().collect(), keywords: keywords.into_iter().collect() }
}

fn share_of(fb: &UsageFeedback, appliance: &str) -> f64 {
    fb.appliance_breakdown
        .iter()
        .find(|(a, _)| a.eq_ignore_ascii_case(appliance))
        .map(|(_, s)| *s)
        .unwrap_or(UNLISTED_SHARE)
}

fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}

fn call(backend: &dyn GenerationBackend, task: &str, fields: &Fields, seed: u64) -> Result<Fields, AgentError> {
    backend.complete(fields, seed).map_err(|source| AgentError::Backend { task: task.to_string(), source })
}

fn summary_request(profile: &ParticipantProfile, fb: &FeedbackPair) -> Fields {
    let mut f = Fields::new();
    f.insert(TASK.into(), TASK_SUMMARIZE.into());
    f.insert("participant_id".into(), profile.participant_id.clone());
    f.insert("round".into(), (profile.round + 1).to_string());
    f.insert("mean_psych".into(), fmt_f(profile.mean_psych()));
    for (name, v) in crate::profile::PsychScores::NAMES.iter().zip(profile.psych.as_array()) {
        f.insert(format!("psych_{name}"), fmt_f(v));
    }
    f.insert("living_budget".into(), fmt_f(profile.socio.living_budget));
    f.insert("previous_summary".into(), profile.summary.clone());
    f.insert("prior_rounds".into(), profile.prior_suggestions.len().to_string());
    if let Some(last) = profile.feedback_log.last() {
        f.insert("last_feedback".into(), last.text.clone());
    }
    for r in Resource::ALL {
        let u = fb.get(r);
        let p = r.as_str();
        f.insert(format!("{p}_daily_mean"), fmt_f(u.daily_mean));
        f.insert(format!("{p}_peer_ratio"), fmt_f(u.peer_ratio));
        f.insert(format!("{p}_trend"), format!("{:?}", u.trend).to_lowercase());
        if let Some(pct) = u.percent_change {
            f.insert(format!("{p}_percent_change"), fmt_f(pct));
        }
    }
    let top = fb
        .electricity
        .appliance_breakdown
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(a, _)| a.clone())
        .unwrap_or_default();
    f.insert("top_appliance".into(), top);
    f
}

fn generate_request(profile: &ParticipantProfile, fb: &UsageFeedback, summary: &str) -> Fields {
    let mut f = Fields::new();
    f.insert(TASK.into(), TASK_GENERATE.into());
    f.insert("resource".into(), fb.resource.as_str().into());
    f.insert("count".into(), GENERATED_PER_RESOURCE.to_string());
    f.insert("participant_id".into(), profile.participant_id.clone());
    f.insert("summary".into(), summary.to_string());
    let mut apps = fb.appliance_breakdown.clone();
    apps.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let listing: Vec<String> = apps.iter().map(|(a, s)| format!("{a}:{}", fmt_f(*s))).collect();
    f.insert("appliances".into(), listing.join(";"));
    f
}

fn parse_generated(
    backend: &str,
    resource: Resource,
    out: &Fields,
) -> Result<Vec<Candidate>, backend::BackendError> {
    let mut cands = Vec::new();
    for i in 1..=GENERATED_PER_RESOURCE {
        let get = |k: &str| {
            let key = format!("suggestion_{i}_{k}");
            field(out, &key).map(str::to_string).ok_or_else(|| backend::missing(backend, &key))
        };
        let appliance = get("appliance")?;
        let strategy: Strategy = get("strategy")?.parse().map_err(|m: String| backend::BackendError {
            backend: backend.to_string(),
            attempts: 1,
            retryable: false,
            message: m,
        })?;
        let text = get("text")?;
        let behavior_type = get("behavior_type").unwrap_or_else(|_| behavior_tag_for(&appliance).to_string());
        cands.push(Candidate {
            id: generated_id(resource, &appliance, strategy),
            resource,
            appliance,
            behavior_type,
            strategy,
            text,
            origin: Origin::Generated,
            retrieval_score: None,
        });
    }
    Ok(cands)
}

fn rank_request(pool: &[Candidate], fb: &UsageFeedback) -> Fields {
    let mut f = Fields::new();
    f.insert(TASK.into(), TASK_RANK.into());
    f.insert("resource".into(), fb.resource.as_str().into());
    f.insert("candidate_count".into(), pool.len().to_string());
    for (i, c) in pool.iter().enumerate() {
        let k = i + 1;
        f.insert(format!("candidate_{k}_id"), c.id.clone());
        f.insert(format!("candidate_{k}_appliance"), c.appliance.clone());
        f.insert(format!("candidate_{k}_strategy"), c.strategy.as_str().into());
        f.insert(format!("candidate_{k}_share"), fmt_f(share_of(fb, &c.appliance)));
        f.insert(format!("candidate_{k}_text"), c.text.clone());
    }
    f
}

fn apply_ranking(backend: &str, pool: Vec<Candidate>, out: &Fields) -> Result<Vec<Candidate>, backend::BackendError> {
    let ranking = field(out, "ranking").ok_or_else(|| backend::missing(backend, "ranking"))?;
    let ids: Vec<&str> = ranking.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let unique: BTreeSet<&str> = ids.iter().copied().collect();
    let pool_ids: BTreeSet<&str> = pool.iter().map(|c| c.id.as_str()).collect();
    if ids.len() != pool.len() || unique != pool_ids {
        return Err(backend::BackendError {
            backend: backend.to_string(),
            attempts: 1,
            retryable: false,
            message: format!("ranking `{ranking}` is not a permutation of the candidate pool"),
        });
    }
    let mut ranked = Vec::with_capacity(pool.len());
    for id in ids {
        ranked.push(pool.iter().find(|c| c.id == id).expect("checked above").clone());
    }
    Ok(ranked)
}

/// Build the summary text from the four guiding-question answers.
pub fn format_summary(out: &Fields) -> Option<String> {
    let mut lines = Vec::with_capacity(4);
    for key in SUMMARY_FIELDS {
        lines.push(format!("{key}: {}", field(out, key)?.trim()));
    }
    Some(lines.join("\n"))
}

/// Stage 2: update the summary, build a 2+2 pool per resource, rank, and pick two.
pub fn stage2_select(
    profile: &ParticipantProfile,
    feedback: &FeedbackPair,
    library: &Library,
    backend: &dyn GenerationBackend,
    seed: u64,
) -> Result<Stage2Output, AgentError> {
    let out = call(backend, TASK_SUMMARIZE, &summary_request(profile, feedback), seed)?;
    let new_summary = format_summary(&out).ok_or_else(|| AgentError::Backend {
        task: TASK_SUMMARIZE.into(),
        source: backend::missing(backend.name(), "summary fields"),
    })?;

    let query = profile_query(profile, &new_summary);
    let previous: BTreeSet<&str> = profile.delivered_ids(profile.round).into_iter().collect();
    let mut pool = CandidatePool::default();
    let mut selected = Vec::with_capacity(2 * SELECTED_PER_RESOURCE);

    for resource in Resource::ALL {
        let fb = feedback.get(resource);
        let mut cands: Vec<Candidate> = library
            .retrieve_top_k(&query, resource, RETRIEVED_PER_RESOURCE)
            .iter()
            .map(|s| Candidate::from_record(&s.record, s.score))
            .collect();
        let gen_out = call(backend, TASK_GENERATE, &generate_request(profile, fb, &new_summary), seed)?;
        let generated = parse_generated(backend.name(), resource, &gen_out)
            .map_err(|source| AgentError::Backend { task: TASK_GENERATE.into(), source })?;
        for g in generated {
            if !cands.iter().any(|c| c.id == g.id) {
                cands.push(g);
            }
        }
        let need = RETRIEVED_PER_RESOURCE + GENERATED_PER_RESOURCE;
        if cands.len() < need {
            return Err(AgentError::PoolUnderfull { resource, have: cands.len(), need });
        }
        let rank_out = call(backend, TASK_RANK, &rank_request(&cands, fb), seed)?;
        let ranked = apply_ranking(backend.name(), cands, &rank_out)
            .map_err(|source| AgentError::Backend { task: TASK_RANK.into(), source })?;
        let picks: Vec<Candidate> = ranked
            .iter()
            .filter(|c| !previous.contains(c.id.as_str()))
            .take(SELECTED_PER_RESOURCE)
            .cloned()
            .collect();
        if picks.len() < SELECTED_PER_RESOURCE {
            return Err(AgentError::PoolUnderfull { resource, have: picks.len(), need: SELECTED_PER_RESOURCE });
        }
        selected.extend(picks);
        *pool.get_mut(resource) = ranked;
    }

    Ok(Stage2Output { selected, pool, new_summary })
}
