//! `crossroads` — batch front end of the scenario pipeline.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crossroads::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "crossroads", version, about = "Intersection scenario extraction, simulation and replay")]
struct Cli {
    /// Run configuration file (flat `key = value` lines).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set sim.dt=0.01`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Name of the output directory below `paths.output` (sets `run.id`).
    #[arg(long, global = true)]
    run_id: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, label and extract intersecting scenarios from a recording.
    Extract,
    /// Run the traffic simulation and extract scenarios from its log.
    Simulate,
    /// Fit behavior parameters to a recording with the genetic algorithm.
    Calibrate,
    /// Adaptive replay of one extracted scenario around a substituted ego.
    Replay,
    /// PET five-number summaries per functional type.
    Stats,
    /// Fit a logical scenario and draw concrete parameter vectors from it.
    Sample,
    /// Write the bundled planted recording and intersection map.
    Synth {
        /// Target directory.
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Print the effective configuration.
    Config,
}

fn load_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(id) = &cli.run_id {
        cfg.set("run.id", id)?;
    }
    cfg.check()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let dir = match &cli.command {
        Command::Extract => commands::extract(&cfg)?,
        Command::Simulate => commands::simulate(&cfg)?,
        Command::Calibrate => commands::calibrate_cmd(&cfg)?,
        Command::Replay => commands::replay(&cfg)?,
        Command::Stats => commands::stats(&cfg)?,
        Command::Sample => commands::sample(&cfg)?,
        Command::Synth { out } => {
            commands::synth_data(out)?;
            println!("{}", out.display());
            return Ok(());
        }
        Command::Config => {
            print!("{}", cfg.snapshot());
            println!("# hash = {}", cfg.hash());
            return Ok(());
        }
    };
    println!("{}", dir.root.display());
    Ok(())
}

/// 1 config error, 2 data error, 3 runtime abort.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => 1,
                Error::NonFinite { .. } | Error::PolicyOutput { .. } | Error::OffRoute { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
