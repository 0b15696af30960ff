use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stagematch::{Error, Result};
use stagematch_cli::config::{ExperimentConfig, ExperimentName};
use stagematch_cli::experiments;

#[derive(Debug, Parser)]
#[command(name = "stagematch", version, about = "Multi-stage matching market experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its CSV results.
    Run {
        experiment: String,
        /// TOML file with replications, seed, output and [params].
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed; overrides the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Replication count; overrides the config file.
        #[arg(long)]
        reps: Option<usize>,
        /// Output directory; overrides the config file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available experiments.
    List,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::List => {
            for e in ExperimentName::ALL {
                println!("{:<20} {}", e.as_str(), e.describe());
            }
            Ok(())
        }
        Command::Run { experiment, config, seed, reps, out } => {
            let name: ExperimentName = experiment.parse()?;
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::named(name),
            };
            if cfg.experiment != name {
                return Err(Error::Config(format!(
                    "config file is for `{}` but `{}` was requested",
                    cfg.experiment, name
                )));
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            cfg.validate()?;
            for path in experiments::run(&cfg)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}
