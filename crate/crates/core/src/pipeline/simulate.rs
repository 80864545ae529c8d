use super::{write_file, Layout, Manifest, PipelineError, RunConfig};
use crate::profile::write_snapshots;
use crate::rng;
use crate::sim::{clean_panel, randomize, simulate_trial, synth_population, ExclusionReport, SimOutput};
use crate::types::Resource;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub participants: usize,
    pub arm_sizes: [usize; 3],
    pub clusters: usize,
    /// Preview of the cleaning rules applied to the simulated panel.
    pub exclusions: ExclusionReport,
}

/// Draw a population, randomize and simulate the trial in memory.
pub fn simulate_in_memory(cfg: &RunConfig) -> Result<(SimOutput, usize), PipelineError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let pop = synth_population(&cfg.sim, rng::derive(seed, "population"))?;
    let assignment = randomize(&pop.clusters, rng::derive(seed, "randomize"))?;
    let out = simulate_trial(&pop.profiles, &assignment, &cfg.sim, rng::derive(seed, "simulate"))?;
    Ok((out, pop.clusters.len()))
}

fn assignment_csv(out: &SimOutput) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| PipelineError::Sim(e.into());
    w.write_record(["participant_id", "cluster_id", "arm"]).map_err(to_err)?;
    for (pid, arm) in &out.panel.arms {
        let cluster = out.panel.clusters.get(pid).map(u32::to_string).unwrap_or_default();
        w.write_record([pid.as_str(), cluster.as_str(), arm.as_str()]).map_err(to_err)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

fn truth_csv(out: &SimOutput) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| PipelineError::Sim(e.into());
    let mut header = vec!["participant_id".to_string(), "arm".into(), "archetype".into()];
    for r in Resource::ALL {
        header.push(format!("{r}_base"));
        header.extend((1..=5).map(|k| format!("{r}_saving_r{k}")));
    }
    header.push("reply_prob".into());
    w.write_record(&header).map_err(to_err)?;
    for t in &out.truth {
        let mut rec = vec![t.participant_id.clone(), t.arm.to_string(), t.archetype.to_string()];
        for (i, _) in Resource::ALL.iter().enumerate() {
            rec.push(format!("{:.6}", t.base[i]));
            rec.extend(t.saving[i].iter().map(|s| format!("{s:.6}")));
        }
        rec.push(format!("{:.6}", t.reply_prob));
        w.write_record(&rec).map_err(to_err)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

/// Simulate a trial and write its raw data into the run directory.
pub fn cmd_simulate(cfg: &RunConfig, layout: &Layout) -> Result<SimulateSummary, PipelineError> {
    let (out, clusters) = simulate_in_memory(cfg)?;
    let seed = cfg.seed()?;

    let mut panel = Vec::new();
    out.panel.write_csv(&mut panel)?;
    write_file(&layout.panel(), &panel)?;
    let mut events = Vec::new();
    out.panel.write_events_csv(&mut events)?;
    write_file(&layout.events(), &events)?;
    write_file(&layout.assignment(), &assignment_csv(&out)?)?;
    write_file(&layout.truth(), &truth_csv(&out)?)?;
    let mut snaps = Vec::new();
    write_snapshots(&mut snaps, &out.profiles).map_err(|e| super::input_err(&layout.profiles(0), e))?;
    write_file(&layout.profiles(0), &snaps)?;
    write_file(&layout.config(), cfg.to_toml().as_bytes())?;
    let (_, exclusions) = clean_panel(&out.panel, &cfg.cleaning);
    write_file(&layout.exclusions(), exclusions.render().as_bytes())?;

    let mut manifest = Manifest::new(seed);
    let outputs = [
        layout.config(),
        layout.panel(),
        layout.events(),
        layout.assignment(),
        layout.truth(),
        layout.profiles(0),
        layout.exclusions(),
    ];
    let outputs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    manifest.record(layout, "simulate", &[], &outputs, BTreeMap::new())?;
    manifest.save(layout)?;

    let mut arm_sizes = [0; 3];
    for arm in out.panel.arms.values() {
        arm_sizes[arm.index()] += 1;
    }
    Ok(SimulateSummary { participants: out.profiles.len(), arm_sizes, clusters, exclusions })
}
