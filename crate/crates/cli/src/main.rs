use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mxm_cli::commands;
use mxm_cli::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "mxm",
    version,
    about = "Train and check multiplex molecular graph networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump graphs and basis features for every molecule in the manifest
    Featurize(Common),
    /// Train a model and write the checkpoint and per-epoch report
    Train(Common),
    /// Print metrics of a checkpoint on each split as JSON lines
    Eval(Common),
    /// Run the property checks on the manifest molecules
    Verify(Common),
    /// Message-count scaling on random geometric graphs
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    target: Option<String>,
    /// Global-layer cutoff in Å
    #[arg(long)]
    dg: Option<f64>,
    /// Local-layer cutoff in Å, or `bonds`
    #[arg(long)]
    dl: Option<String>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint path (default: <out>/checkpoint.mxm)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Common {
    fn load(self) -> Result<RunConfig> {
        let o = Overrides {
            seed: self.seed,
            target: self.target,
            dg: self.dg,
            dl: self.dl,
            layers: self.layers,
            hidden: self.hidden,
            lr: self.lr,
            epochs: self.epochs,
            out: self.out,
            checkpoint: self.checkpoint,
        };
        RunConfig::load(self.config.as_deref(), &o)
    }
}

fn threads_from_env() -> Result<()> {
    if let Ok(v) = std::env::var("MXM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("MXM_THREADS must be a positive integer, got `{v}`"))?;
        mxm_core::par::init_threads(n)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    threads_from_env()?;
    match cli.command {
        Command::Featurize(c) => commands::featurize_cmd(&c.load()?)?,
        Command::Train(c) => commands::train_cmd(&c.load()?)?,
        Command::Eval(c) => commands::eval_cmd(&c.load()?)?,
        Command::Verify(c) => return commands::verify_cmd(&c.load()?),
        Command::Bench(c) => commands::bench_cmd(&c.load()?)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
