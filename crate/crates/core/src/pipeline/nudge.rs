use super::{input_err, read_file, require, write_file, Layout, Manifest, PipelineError, RunConfig};
use super::config::BackendKind;
use crate::agent::bundle::write_bundles;
use crate::agent::{AnalogyTable, GenerationBackend, NudgeAgent, NudgeBundle, RemoteBackend, RemoteConfig, SafetyFlag, TemplateBackend};
use crate::knowledge::{load_library, Library};
use crate::profile::{read_snapshots, write_snapshots, DailyValue, DeliveredSuggestion, ParticipantProfile, RoundData};
use crate::rng;
use crate::sim::{EventKind, TrialPanel};
use crate::types::{Arm, Resource, ROUNDS};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct NudgeSummary {
    pub round: u32,
    pub bundles: usize,
    pub flags: usize,
    /// Participants whose generation failed, with the reason.
    pub failures: Vec<(String, String)>,
}

#[derive(Serialize)]
struct FlagLine<'a> {
    participant_id: &'a str,
    round: u32,
    #[serde(flatten)]
    flag: &'a SafetyFlag,
}

fn load_agent_parts(cfg: &RunConfig) -> Result<(Library, AnalogyTable), PipelineError> {
    let library = match &cfg.backend.library {
        Some(p) => {
            require(p, "library")?;
            load_library(p)?
        }
        None => Library::bundled(),
    };
    let analogies = match &cfg.backend.analogies {
        Some(p) => {
            require(p, "analogies")?;
            AnalogyTable::load(p).map_err(|e| input_err(p, e))?
        }
        None => AnalogyTable::default(),
    };
    Ok((library, analogies))
}

fn read_panel(layout: &Layout, cfg: &RunConfig) -> Result<TrialPanel, PipelineError> {
    let path = layout.panel();
    require(&path, "simulate")?;
    let mut panel = TrialPanel::read_csv(read_file(&path)?.as_slice(), Some(cfg.sim.start_date))?;
    let events = layout.events();
    require(&events, "simulate")?;
    panel.events = TrialPanel::read_events_csv(read_file(&events)?.as_slice())?;
    Ok(panel)
}

pub(crate) fn read_profiles(path: &Path, stage: &str) -> Result<Vec<ParticipantProfile>, PipelineError> {
    require(path, stage)?;
    read_snapshots(read_file(path)?.as_slice()).map_err(|e| input_err(path, e))
}

/// Consumption of round `round` per participant, from the raw panel.
fn round_values(panel: &TrialPanel, round: u32) -> BTreeMap<(String, Resource), Vec<DailyValue>> {
    let mut out: BTreeMap<(String, Resource), Vec<DailyValue>> = BTreeMap::new();
    for row in panel.rows.iter().filter(|r| r.round == round) {
        out.entry((row.participant_id.clone(), row.resource))
            .or_default()
            .push(DailyValue { day: row.day, value: row.valid() });
    }
    for v in out.values_mut() {
        v.sort_by_key(|d| d.day);
    }
    out
}

/// Reply text sent in response to round `round`.
fn replies(panel: &TrialPanel, round: u32) -> BTreeMap<&str, String> {
    let mut out: BTreeMap<&str, String> = BTreeMap::new();
    for e in panel.events.iter().filter(|e| e.round == round && e.kind == EventKind::Reply) {
        let entry = out.entry(e.participant_id.as_str()).or_default();
        if !entry.is_empty() {
            entry.push(' ');
        }
        entry.push_str(&e.text);
    }
    out
}

type Generated = Result<(NudgeBundle, Vec<SafetyFlag>), String>;

fn generate_all<B: GenerationBackend>(
    agent: &NudgeAgent<B>,
    profiles: &[ParticipantProfile],
    arms: &BTreeMap<String, Arm>,
    round: u32,
    seed: u64,
) -> Vec<Generated> {
    let mut by_arm: BTreeMap<Arm, Vec<&ParticipantProfile>> = BTreeMap::new();
    for p in profiles {
        if let Some(arm) = arms.get(&p.participant_id) {
            by_arm.entry(*arm).or_default().push(p);
        }
    }
    profiles
        .par_iter()
        .map(|p| {
            let arm = *arms.get(&p.participant_id).ok_or_else(|| "no arm assignment".to_string())?;
            let peers: Vec<&ParticipantProfile> = by_arm[&arm]
                .iter()
                .copied()
                .filter(|q| q.participant_id != p.participant_id)
                .collect();
            agent
                .generate(p, &peers, arm, round, seed)
                .map(|o| (o.bundle, o.flags))
                .map_err(|e| e.to_string())
        })
        .collect()
}

/// Generate round `round` messages and advance every profile to that round.
pub fn cmd_nudge(cfg: &RunConfig, layout: &Layout, round: u32) -> Result<NudgeSummary, PipelineError> {
    if round == 0 || round > ROUNDS {
        return Err(PipelineError::Round(round));
    }
    let seed = cfg.seed()?;
    let prev_path = layout.profiles(round - 1);
    let stage = if round == 1 { "simulate".to_string() } else { format!("nudge --round {}", round - 1) };
    let mut profiles = read_profiles(&prev_path, &stage)?;
    let panel = read_panel(layout, cfg)?;
    if let Some(p) = profiles.iter().find(|p| p.round != round - 1) {
        return Err(input_err(&prev_path, format!("{} is at round {}, expected {}", p.participant_id, p.round, round - 1)));
    }

    if round >= 2 {
        let values = round_values(&panel, round - 1);
        let mut updated = Vec::with_capacity(profiles.len());
        for mut p in profiles {
            for r in Resource::ALL {
                if let Some(v) = values.get(&(p.participant_id.clone(), r)) {
                    p = p.with_history(r, v).map_err(|e| input_err(&layout.panel(), e))?;
                }
            }
            updated.push(p);
        }
        profiles = updated;
    }

    let (library, analogies) = load_agent_parts(cfg)?;
    let nudge_seed = rng::derive(seed, "nudge");
    let results = match cfg.backend.kind {
        BackendKind::Template => {
            let mut agent = NudgeAgent::new(library, TemplateBackend::new());
            agent.analogies = analogies;
            generate_all(&agent, &profiles, &panel.arms, round, nudge_seed)
        }
        BackendKind::Remote => {
            let remote = RemoteConfig::from_env().ok_or_else(|| {
                PipelineError::Validation(format!(
                    "remote backend selected but {} is not set",
                    crate::agent::remote::ENV_URL
                ))
            })?;
            let mut agent = NudgeAgent::new(library, RemoteBackend::new(remote));
            agent.analogies = analogies;
            generate_all(&agent, &profiles, &panel.arms, round, nudge_seed)
        }
    };

    let reply_text = replies(&panel, round);
    let mut bundles = Vec::new();
    let mut flag_lines = Vec::new();
    let mut failures = Vec::new();
    let mut next = Vec::with_capacity(profiles.len());
    for (p, res) in profiles.iter().zip(&results) {
        let (delivered, summary) = match res {
            Ok((bundle, flags)) => {
                bundles.push(bundle.clone());
                for f in flags {
                    flag_lines.push(serde_json::to_string(&FlagLine { participant_id: &p.participant_id, round, flag: f }).expect("flag serializes"));
                }
                let delivered: Vec<DeliveredSuggestion> = bundle
                    .suggestions
                    .iter()
                    .map(|c| DeliveredSuggestion { id: c.id.clone(), text: c.text.clone() })
                    .collect();
                (delivered, bundle.new_summary.clone().unwrap_or_else(|| p.summary.clone()))
            }
            Err(msg) => {
                log::warn!("round {round}: {}: {msg}", p.participant_id);
                failures.push((p.participant_id.clone(), msg.clone()));
                (Vec::new(), p.summary.clone())
            }
        };
        let data = RoundData {
            round,
            consumption: Vec::new(),
            feedback: reply_text.get(p.participant_id.as_str()).cloned(),
            delivered,
        };
        next.push(p.update(&data, &summary).map_err(|e| input_err(&prev_path, e))?);
    }
    if bundles.is_empty() && !profiles.is_empty() {
        let (id, msg) = &failures[0];
        return Err(PipelineError::Validation(format!("no bundle could be generated (first failure, {id}: {msg})")));
    }

    let mut buf = Vec::new();
    write_bundles(&mut buf, &bundles).map_err(super::io_err(&layout.bundles(round)))?;
    write_file(&layout.bundles(round), &buf)?;
    let mut snaps = Vec::new();
    write_snapshots(&mut snaps, &next).map_err(|e| input_err(&layout.profiles(round), e))?;
    write_file(&layout.profiles(round), &snaps)?;
    let mut flags_text = flag_lines.join("\n");
    if !flags_text.is_empty() {
        flags_text.push('\n');
    }
    write_file(&layout.flags(round), flags_text.as_bytes())?;

    let mut manifest = Manifest::load_or_new(layout, seed)?;
    let mut status = BTreeMap::new();
    status.insert("backend".to_string(), format!("{:?}", cfg.backend.kind).to_lowercase());
    status.insert("failures".to_string(), failures.len().to_string());
    let inputs = [prev_path.clone(), layout.panel(), layout.events()];
    let outputs = [layout.bundles(round), layout.profiles(round), layout.flags(round)];
    manifest.record(
        layout,
        &format!("nudge_round{round}"),
        &inputs.iter().map(|p| p.as_path()).collect::<Vec<_>>(),
        &outputs.iter().map(|p| p.as_path()).collect::<Vec<_>>(),
        status,
    )?;
    manifest.save(layout)?;

    Ok(NudgeSummary { round, bundles: bundles.len(), flags: flag_lines.len(), failures })
}
