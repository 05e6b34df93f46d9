//! `dprop`: generate corpora, train, evaluate and grid-search joint
//! rationale-extraction models from a TOML run configuration.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "dprop", version, about = "Joint rationale extraction with diagnostic-property objectives")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        Ok(config)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic corpus in `data.synthetic` as JSONL splits.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes best/final checkpoints and a step log.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Add sufficiency/completeness, data-consistency and confidence blocks.
        #[arg(long)]
        properties: bool,
        /// Add the query-only bias block.
        #[arg(long)]
        query_only: bool,
        /// Split to evaluate (defaults to `eval.split`).
        #[arg(long)]
        split: Option<String>,
    },
    /// Grid search over the `sweep` section, scored on validation.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    let cli = Cli::parse();
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => commands::synth(&common.load()?),
        Command::Train { common } => commands::train(&common.load()?),
        Command::Eval { common, checkpoint, properties, query_only, split } => {
            let mut config = common.load()?;
            config.eval.properties |= properties;
            config.eval.query_only |= query_only;
            if let Some(s) = split {
                config.eval.split = s;
            }
            commands::eval(&config, &checkpoint)
        }
        Command::Sweep { common } => commands::sweep(&common.load()?),
    }
}
