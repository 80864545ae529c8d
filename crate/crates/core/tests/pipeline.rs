use nudgelab_core::pipeline::{
    cmd_analyze, cmd_nudge, cmd_report, cmd_simulate, ErrorClass, Layout, Manifest, PipelineError, RunConfig,
};
use std::path::Path;

fn small_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_toml(
        "[sim]\nn = 60\n[analysis]\npermutation_replicates = 49\nforest_trees = 20\nhte_folds = 3\n",
    )
    .unwrap();
    cfg.seed = Some(seed);
    cfg
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn full_pipeline_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let cfg = small_config(11);
    let sim = cmd_simulate(&cfg, &layout).unwrap();
    assert_eq!(sim.participants, 60);
    assert_eq!(sim.arm_sizes.iter().sum::<usize>(), 60);
    for round in 1..=5 {
        let s = cmd_nudge(&cfg, &layout, round).unwrap();
        assert_eq!(s.bundles + s.failures.len(), 60, "round {round}");
        assert!(layout.bundles(round).is_file());
    }
    let a = cmd_analyze(&cfg, &layout).unwrap();
    for name in ["exclusions", "main_effects", "trajectories", "engagement", "robustness", "text"] {
        assert_eq!(a.status[name], "ok", "{name}: {}", a.status[name]);
    }
    assert!(layout.analysis("contrasts.csv").is_file());
    let report = cmd_report(&layout).unwrap();
    let md = String::from_utf8(read(&report)).unwrap();
    assert!(md.contains("## Arm contrasts"));

    let m: Manifest = serde_json::from_slice(&read(&layout.manifest())).unwrap();
    assert_eq!(m.seed, 11);
    assert!(m.stages.contains_key("simulate") && m.stages.contains_key("nudge_round5") && m.stages.contains_key("analyze"));
    let digest = &m.stages["simulate"].outputs["panel.csv"];
    assert_eq!(digest.len(), 64);
}

#[test]
fn identical_seeds_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_config(5);
    for d in [a.path(), b.path()] {
        let l = Layout::new(d);
        cmd_simulate(&cfg, &l).unwrap();
        cmd_nudge(&cfg, &l, 1).unwrap();
        cmd_nudge(&cfg, &l, 2).unwrap();
    }
    for rel in ["panel.csv", "events.csv", "truth.csv", "nudge/bundles_round2.jsonl", "nudge/profiles_round2.jsonl", "manifest.json"] {
        assert_eq!(read(&a.path().join(rel)), read(&b.path().join(rel)), "{rel}");
    }
}

#[test]
fn nudge_before_simulate_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_nudge(&small_config(1), &Layout::new(dir.path()), 1).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Dependency);
    let err = cmd_analyze(&small_config(1), &Layout::new(dir.path())).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Dependency);
    assert_eq!(cmd_report(&Layout::new(dir.path())).unwrap_err().class(), ErrorClass::Dependency);
}

#[test]
fn skipping_a_round_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let cfg = small_config(2);
    cmd_simulate(&cfg, &layout).unwrap();
    assert_eq!(cmd_nudge(&cfg, &layout, 3).unwrap_err().class(), ErrorClass::Dependency);
}

#[test]
fn invalid_inputs_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let cfg = small_config(2);
    assert!(matches!(cmd_nudge(&cfg, &layout, 0), Err(PipelineError::Round(0))));
    assert_eq!(cmd_nudge(&cfg, &layout, 6).unwrap_err().class(), ErrorClass::Validation);
    let mut bad = cfg.clone();
    bad.sim.n = 2;
    assert_eq!(cmd_simulate(&bad, &layout).unwrap_err().class(), ErrorClass::Validation);
    let mut unseeded = cfg;
    unseeded.seed = None;
    assert_eq!(cmd_simulate(&unseeded, &layout).unwrap_err().class(), ErrorClass::Validation);
}
