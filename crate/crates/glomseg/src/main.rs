use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glomseg::config::schema_text;
use glomseg::{commands, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "glomseg", version, about = "Holistic glomerular segmentation with a task-conditioned dynamic head")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set run.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a dataset tree and write its manifest.
    Ingest(Common),
    /// Render phantoms into a dataset tree.
    MakeSynthetic(Common),
    /// Train on the manifest's training patients.
    Train(Common),
    /// Score a checkpoint on one split.
    Eval(Common),
    /// Train and score the four transfer approaches.
    Transfer(Common),
    /// Export multi-channel masks for a directory of patches.
    Segment(Common),
    /// Print every configuration key with its default.
    Config,
}

fn load(common: &Common) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        cfg.apply_override(pair)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("run.seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Ingest(c) => ("ingest", c),
        Command::MakeSynthetic(c) => ("make-synthetic", c),
        Command::Train(c) => ("train", c),
        Command::Eval(c) => ("eval", c),
        Command::Transfer(c) => ("transfer", c),
        Command::Segment(c) => ("segment", c),
        Command::Config => {
            print!("{}", schema_text());
            return ExitCode::SUCCESS;
        }
    };
    match load(common).and_then(|cfg| commands::run(name, &cfg)) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", outcome.report);
            for p in &outcome.paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
