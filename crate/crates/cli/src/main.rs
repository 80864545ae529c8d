use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nudgelab_core::pipeline::{
    cmd_analyze, cmd_nudge, cmd_report, cmd_simulate, ErrorClass, Layout, PipelineError, RunConfig,
};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate a three-arm nudge trial, generate the weekly messages and analyse the outcome.
#[derive(Debug, Parser)]
#[command(name = "nudgelab", version)]
struct Cli {
    /// TOML run configuration. Later stages fall back to `<out>/config.toml`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory; overrides the configuration (default `run`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw participants, randomize and simulate consumption and engagement.
    Simulate,
    /// Generate one round of weekly messages and update participant profiles.
    Nudge {
        /// Round number, 1 to 5.
        #[arg(long)]
        round: u32,
    },
    /// Clean the panel and run every enabled analysis.
    Analyze,
    /// Render report.md from the analysis tables.
    Report,
}

fn resolve(cli: &Cli) -> Result<(RunConfig, Layout)> {
    let fallback = cli.out.as_ref().map(|o| o.join("config.toml"));
    let mut cfg = match (&cli.config, &cli.command) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Command::Simulate) => RunConfig::default(),
        (None, _) => match fallback.filter(|p| p.is_file()) {
            Some(p) => RunConfig::load(&p)?,
            None => {
                let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("run"));
                let p = out.join("config.toml");
                if p.is_file() { RunConfig::load(&p)? } else { RunConfig::default() }
            }
        },
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    let root = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("run"));
    Ok((cfg, Layout::new(root)))
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, layout) = resolve(&cli)?;
    match cli.command {
        Command::Simulate => {
            let s = cmd_simulate(&cfg, &layout)?;
            println!(
                "simulated {} participants in {} clusters; arm sizes C={} T1={} T2={}",
                s.participants, s.clusters, s.arm_sizes[0], s.arm_sizes[1], s.arm_sizes[2]
            );
            print!("{}", s.exclusions.render());
            println!("wrote {}", layout.root.display());
        }
        Command::Nudge { round } => {
            let s = cmd_nudge(&cfg, &layout, round)?;
            println!("round {}: {} bundles, {} safety flags", s.round, s.bundles, s.flags);
            for (id, msg) in &s.failures {
                println!("  not generated for {id}: {msg}");
            }
        }
        Command::Analyze => {
            let s = cmd_analyze(&cfg, &layout)?;
            for (name, status) in &s.status {
                println!("{name:<14} {status}");
            }
            println!("wrote {} files under {}", s.outputs.len(), layout.analysis_dir().display());
        }
        Command::Report => {
            let path = cmd_report(&layout).context("rendering the report")?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<PipelineError>().map(PipelineError::class) {
        Some(ErrorClass::Validation) => 2,
        Some(ErrorClass::Dependency) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
