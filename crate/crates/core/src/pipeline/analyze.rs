use super::nudge::read_profiles;
use super::{input_err, read_file, require, write_file, Layout, Manifest, PipelineError, RunConfig};
use crate::agent::bundle::read_bundles;
use crate::agent::render_text;
use crate::archetype::{archetype_shares, cluster_archetypes, trajectory_of, write_assignments_csv, ArchetypeConfig};
use crate::hte::{estimate_ites, top_quartile_profile, write_ite_csv, Contrast, HteConfig, HteData};
use crate::predictors::{fit_importance, model_selection, phase_comparison, write_importance_csv, Phase, PredictorData};
use crate::profile::ParticipantProfile;
use crate::rng;
use crate::sim::{clean_panel, exclusion_rates, Archetype, ExclusionReport, TrialPanel};
use crate::stats::{
    analytic_units, contrasts, cumulative_trajectory, engagement_rate, fit_arm_model, km_survival, panel_fe_from_trial,
    permutation_test, pool_standardized, saving_rate, ResultTable, Unit,
};
use crate::text::{count_keywords, group_shares, round_drift, write_profiles_csv, ArmClass, Category, KeywordDictionary};
use crate::trees::ForestParams;
use crate::types::{Arm, Resource, ROUNDS};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct AnalyzeSummary {
    pub outputs: Vec<PathBuf>,
    /// Analysis name to `ok` or `skipped: <reason>`.
    pub status: BTreeMap<String, String>,
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

type Step = Result<(), String>;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    layout: &'a Layout,
    seed: u64,
    panel: TrialPanel,
    profiles: Vec<ParticipantProfile>,
    units: BTreeMap<Resource, Vec<Unit>>,
    outputs: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn emit(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), String> {
        let path = self.layout.analysis(name);
        write_file(&path, &bytes).map_err(|e| e.to_string())?;
        self.outputs.push(path);
        Ok(())
    }

    fn emit_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), String> {
        let bytes = csv_bytes(header, rows).map_err(|e| e.to_string())?;
        self.emit(name, bytes)
    }

    fn seed_for(&self, label: &str) -> u64 {
        rng::derive(self.seed, &format!("analysis/{label}"))
    }
}

fn exclusions(ctx: &mut Ctx, report: &ExclusionReport) -> Step {
    let mut rows = Vec::new();
    for r in &report.resources {
        let rates = exclusion_rates(r);
        for arm in Arm::ALL {
            let i = arm.index();
            rows.push(vec![
                r.resource.to_string(),
                arm.to_string(),
                r.excluded_by_arm[i].to_string(),
                r.retained_by_arm[i].to_string(),
                f6(rates[i]),
                f6(r.upper_bound),
                r.outliers_flagged.to_string(),
            ]);
        }
    }
    ctx.emit_csv(
        "exclusions.csv",
        &["resource", "arm", "excluded", "retained", "exclusion_rate", "outlier_bound", "outliers_flagged"],
        &rows,
    )
}

fn main_effects(ctx: &mut Ctx) -> Step {
    let mut table = ResultTable::default();
    let mut rates = Vec::new();
    for (resource, units) in &ctx.units {
        let model = fit_arm_model(units, true).map_err(|e| format!("{resource}: {e}"))?;
        table.push_contrasts(resource.as_str(), &contrasts(&model).map_err(|e| e.to_string())?);
        let baseline_mean = units.iter().map(|u| u.baseline).sum::<f64>() / units.len() as f64;
        let s = saving_rate(&model, baseline_mean).map_err(|e| e.to_string())?;
        for arm in Arm::ALL {
            let i = arm.index();
            rates.push(vec![
                resource.to_string(),
                arm.to_string(),
                units.iter().filter(|u| u.arm == arm).count().to_string(),
                f6(s.baseline_mean),
                f6(s.predicted[i]),
                f6(s.rates[i]),
            ]);
        }
    }
    match (ctx.units.get(&Resource::Electricity), ctx.units.get(&Resource::HotWater)) {
        (Some(e), Some(w)) => {
            let pooled = pool_standardized(e, w).map_err(|e| format!("pooled: {e}"))?;
            table.push_contrasts("pooled", &contrasts(&pooled.model).map_err(|e| e.to_string())?);
        }
        _ => return Err("pooled model needs both resources".into()),
    }
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(|e| e.to_string())?;
    ctx.emit("contrasts.csv", buf)?;
    ctx.emit_csv("saving_rates.csv", &["resource", "arm", "n", "baseline_mean", "predicted", "saving_rate"], &rates)
}

fn trajectories(ctx: &mut Ctx) -> Step {
    let mut rows = Vec::new();
    for (resource, units) in &ctx.units {
        for p in cumulative_trajectory(units, true).map_err(|e| format!("{resource}: {e}"))? {
            rows.push(vec![
                resource.to_string(),
                p.round.to_string(),
                f6(p.rates[0]),
                f6(p.rates[1]),
                f6(p.rates[2]),
                f6(p.net_t1),
                f6(p.net_t2),
            ]);
        }
    }
    ctx.emit_csv("trajectories.csv", &["resource", "round", "rate_c", "rate_t1", "rate_t2", "net_t1", "net_t2"], &rows)
}

fn engagement(ctx: &mut Ctx) -> Step {
    let arms = ctx.panel.arms.clone();
    let arms = &arms;
    let rates = engagement_rate(&ctx.panel.events, arms);
    let mut rows = Vec::new();
    for arm in Arm::ALL {
        let n = arms.values().filter(|a| **a == arm).count();
        rows.push(vec![arm.to_string(), n.to_string(), f6(rates[arm.index()])]);
    }
    ctx.emit_csv("engagement.csv", &["arm", "n", "engagement_rate"], &rows)?;
    let curves = km_survival(&ctx.panel.events, arms);
    let mut rows = Vec::new();
    for (arm, c) in &curves {
        for i in 0..c.times.len() {
            rows.push(vec![
                arm.to_string(),
                c.times[i].to_string(),
                c.at_risk[i].to_string(),
                c.events[i].to_string(),
                f6(c.survival[i]),
            ]);
        }
    }
    ctx.emit_csv("survival.csv", &["arm", "round", "at_risk", "events", "survival"], &rows)
}

fn robustness(ctx: &mut Ctx) -> Step {
    let a = &ctx.cfg.analysis;
    let mut table = ResultTable::default();
    let mut skipped = Vec::new();
    if a.permutation {
        for (resource, units) in &ctx.units {
            let labels: Vec<Arm> = units.iter().map(|u| u.arm).collect();
            let clusters: Vec<u32> = units.iter().map(|u| u.cluster_id).collect();
            let statistic = |perm: &[Arm]| {
                let relabelled: Vec<Unit> =
                    units.iter().zip(perm).map(|(u, &arm)| Unit { arm, ..u.clone() }).collect();
                fit_arm_model(&relabelled, true)
                    .and_then(|m| contrasts(&m))
                    .map(|c| c[0].statistic)
                    .unwrap_or(f64::NAN)
            };
            let seed = ctx.seed_for(&format!("permutation/{resource}"));
            let r = permutation_test(&labels, &clusters, statistic, a.permutation_replicates, seed)
                .map_err(|e| format!("permutation {resource}: {e}"))?;
            table.push(&format!("permutation_{resource}"), "omnibus", Some(r.observed), None, Some(r.p));
        }
    } else {
        skipped.push("permutation disabled");
    }
    if a.panel_fe {
        for resource in Resource::ALL {
            match panel_fe_from_trial(&ctx.panel, resource) {
                Ok(fit) => {
                    for (i, name) in fit.names.iter().enumerate() {
                        table.push(&format!("panel_fe_{resource}"), name, Some(fit.coef[i]), Some(fit.se[i]), Some(fit.p[i]));
                    }
                }
                Err(e) => return Err(format!("panel fixed effects {resource}: {e}")),
            }
        }
    } else {
        skipped.push("panel_fe disabled");
    }
    if table.rows.is_empty() {
        return Err(skipped.join(", "));
    }
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(|e| e.to_string())?;
    ctx.emit("robustness.csv", buf)
}

fn hte(ctx: &mut Ctx) -> Step {
    let a = &ctx.cfg.analysis;
    let cfg = HteConfig { folds: a.hte_folds, forest: ForestParams::with_trees(a.forest_trees), ..HteConfig::default() };
    let mut all = Vec::new();
    let mut quart = Vec::new();
    for (resource, units) in &ctx.units {
        let data = HteData::from_units(units, resource.unit());
        for contrast in [Contrast::T1VsC, Contrast::T2VsC] {
            let seed = ctx.seed_for(&format!("hte/{resource}/{}", contrast.label()));
            let scores = estimate_ites(&data, contrast, &cfg, seed).map_err(|e| format!("{resource} {}: {e}", contrast.label()))?;
            let q = top_quartile_profile(&scores, &ctx.profiles).map_err(|e| e.to_string())?;
            quart.push(vec![
                resource.to_string(),
                contrast.label().to_string(),
                q.n_top.to_string(),
                q.n_rest.to_string(),
                f6(q.top_mean_psych),
                f6(q.rest_mean_psych),
                f6(q.top_living_budget),
                f6(q.rest_living_budget),
            ]);
            all.extend(scores);
        }
    }
    let mut buf = Vec::new();
    write_ite_csv(&all, &mut buf).map_err(|e| e.to_string())?;
    ctx.emit("ite.csv", buf)?;
    ctx.emit_csv(
        "hte_quartile.csv",
        &[
            "resource",
            "contrast",
            "n_top",
            "n_rest",
            "top_mean_psych",
            "rest_mean_psych",
            "top_living_budget",
            "rest_living_budget",
        ],
        &quart,
    )
}

fn archetypes(ctx: &mut Ctx) -> Step {
    let mut shares = Vec::new();
    let mut notes = Vec::new();
    let units = ctx.units.clone();
    for (resource, units) in &units {
        let traj: Vec<_> = units.iter().filter_map(trajectory_of).collect();
        let result = cluster_archetypes(&traj, &ArchetypeConfig::default()).map_err(|e| format!("{resource}: {e}"))?;
        let mut buf = Vec::new();
        write_assignments_csv(&result.assignments, &mut buf).map_err(|e| e.to_string())?;
        ctx.emit(&format!("archetypes_{resource}.csv"), buf)?;
        for (arm, s) in archetype_shares(&result.assignments) {
            let mut row = vec![resource.to_string(), arm.to_string()];
            row.extend(s.iter().map(|v| f6(*v)));
            shares.push(row);
        }
        notes.extend(result.notes.iter().map(|n| format!("{resource}: {n}")));
        if !result.unchanged.is_empty() {
            notes.push(format!("{resource}: {} unchanged trajectories left unclustered", result.unchanged.len()));
        }
    }
    let mut header = vec!["resource", "arm"];
    header.extend(Archetype::ALL.iter().map(|a| a.as_str()));
    ctx.emit_csv("archetype_shares.csv", &header, &shares)?;
    for n in notes {
        log::info!("archetypes: {n}");
    }
    Ok(())
}

fn text(ctx: &mut Ctx) -> Step {
    let dict = match &ctx.cfg.analysis.dictionaries {
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            KeywordDictionary::parse(&raw).map_err(|e| e.to_string())?
        }
        None => KeywordDictionary::default_dictionaries(),
    };
    let mut profiles = Vec::new();
    for round in 1..=ROUNDS {
        let path = ctx.layout.bundles(round);
        if !path.is_file() {
            continue;
        }
        let bytes = read_file(&path).map_err(|e| e.to_string())?;
        for b in read_bundles(bytes.as_slice()).map_err(|e| format!("{}: {e}", path.display()))? {
            let class = if b.arm == Arm::T2 { ArmClass::Personalized } else { ArmClass::Conventional };
            let id = format!("{}-r{}", b.participant_id, b.round);
            profiles.push(count_keywords(&id, &render_text(&b), b.round, class, &dict));
        }
    }
    if profiles.is_empty() {
        return Err("no nudge bundles found; run the nudge stage first".into());
    }
    let mut buf = Vec::new();
    write_profiles_csv(&profiles, &mut buf).map_err(|e| e.to_string())?;
    ctx.emit("content_profiles.csv", buf)?;

    let mut rows = Vec::new();
    let fmt = |s: Option<[f64; 5]>| -> Vec<String> {
        match s {
            Some(v) => v.iter().map(|x| f6(*x)).collect(),
            None => vec![String::new(); 5],
        }
    };
    for (class, s) in group_shares(&profiles) {
        let mut row = vec![class.as_str().to_string()];
        row.extend(fmt(s));
        rows.push(row);
    }
    let personalized: Vec<_> = profiles.iter().filter(|p| p.class == ArmClass::Personalized).cloned().collect();
    let drift = round_drift(&personalized);
    for (i, s) in drift.stage_means.iter().enumerate() {
        let mut row = vec![format!("personalized_stage{}", i + 1)];
        row.extend(fmt(*s));
        rows.push(row);
    }
    let mut row = vec!["personalized_increasing".to_string()];
    row.extend(drift.increasing.iter().map(|b| b.to_string()));
    rows.push(row);
    let mut header = vec!["group"];
    header.extend(Category::ALL.iter().map(|c| c.as_str()));
    ctx.emit_csv("content_summary.csv", &header, &rows)
}

fn predictors(ctx: &mut Ctx) -> Step {
    let params = ctx.cfg.analysis.boost;
    let mut profiles = Vec::new();
    let mut selection = Vec::new();
    let units = ctx.units.clone();
    for (resource, units) in &units {
        let data = PredictorData::from_units(units, &ctx.panel.events);
        let (x, y) = data.phase_rows(Phase::Whole);
        let whole = fit_importance(&x, &data.features, &y, Phase::Whole, &params).map_err(|e| format!("{resource}: {e}"))?;
        let (early, late) = phase_comparison(&data, &params).map_err(|e| format!("{resource}: {e}"))?;
        for p in [whole, early, late] {
            profiles.push((resource.to_string(), p));
        }
        let sel = model_selection(&x, &y, 5, ctx.cfg.analysis.forest_trees, ctx.seed_for(&format!("predictors/{resource}")))
            .map_err(|e| format!("{resource}: {e}"))?;
        for s in &sel.scores {
            selection.push(vec![
                resource.to_string(),
                s.learner.clone(),
                s.rmse.map(f6).unwrap_or_default(),
                (s.learner == sel.winner).to_string(),
            ]);
        }
    }
    let mut buf = Vec::new();
    write_importance_csv(&profiles, &mut buf).map_err(|e| e.to_string())?;
    ctx.emit("importance.csv", buf)?;
    ctx.emit_csv("model_selection.csv", &["resource", "learner", "cv_rmse", "selected"], &selection)
}

/// Clean the panel and run every enabled analysis. A failing analysis is
/// reported as skipped and does not stop the others.
pub fn cmd_analyze(cfg: &RunConfig, layout: &Layout) -> Result<AnalyzeSummary, PipelineError> {
    let seed = cfg.seed()?;
    let panel_path = layout.panel();
    require(&panel_path, "simulate")?;
    require(&layout.events(), "simulate")?;
    let raw = TrialPanel::read_csv(read_file(&panel_path)?.as_slice(), Some(cfg.sim.start_date))?;
    let events = TrialPanel::read_events_csv(read_file(&layout.events())?.as_slice())?;
    let profiles = read_profiles(&layout.profiles(0), "simulate")?;
    if profiles.is_empty() {
        return Err(input_err(&layout.profiles(0), "no profiles"));
    }
    let (mut panel, report) = clean_panel(&raw, &cfg.cleaning);
    panel.events = events;
    let units: BTreeMap<Resource, Vec<Unit>> =
        Resource::ALL.iter().map(|&r| (r, analytic_units(&panel, &profiles, r))).collect();

    let mut ctx = Ctx { cfg, layout, seed, panel, profiles, units, outputs: Vec::new() };
    let mut status = BTreeMap::new();
    let a = &cfg.analysis;
    let steps: Vec<(&str, bool, fn(&mut Ctx) -> Step)> = vec![
        ("main_effects", true, main_effects),
        ("trajectories", true, trajectories),
        ("engagement", true, engagement),
        ("robustness", a.permutation || a.panel_fe, robustness),
        ("hte", a.hte, hte),
        ("archetypes", a.archetypes, archetypes),
        ("text", a.text, text),
        ("predictors", a.predictors, predictors),
    ];
    let excl = exclusions(&mut ctx, &report);
    status.insert("exclusions".to_string(), excl.map_or_else(|e| format!("skipped: {e}"), |_| "ok".into()));
    for (name, enabled, step) in steps {
        let outcome = if !enabled {
            "skipped: disabled in configuration".to_string()
        } else {
            match step(&mut ctx) {
                Ok(()) => "ok".into(),
                Err(e) => {
                    log::warn!("{name} skipped: {e}");
                    format!("skipped: {e}")
                }
            }
        };
        status.insert(name.to_string(), outcome);
    }
    status.insert("mlp".into(), "skipped: neural network learner not implemented".into());

    let mut inputs: Vec<PathBuf> = vec![panel_path, layout.events(), layout.profiles(0)];
    inputs.extend((1..=ROUNDS).map(|r| layout.bundles(r)).filter(|p| p.is_file()));
    let mut manifest = Manifest::load_or_new(layout, seed)?;
    manifest.record(
        layout,
        "analyze",
        &inputs.iter().map(|p| p.as_path()).collect::<Vec<&Path>>(),
        &ctx.outputs.iter().map(|p| p.as_path()).collect::<Vec<&Path>>(),
        status.clone(),
    )?;
    manifest.save(layout)?;
    Ok(AnalyzeSummary { outputs: ctx.outputs, status })
}
