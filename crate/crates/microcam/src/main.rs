use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use microcam::{config::KEYS, run, Command, RunConfig};

/// Surface recognition pipeline: trigger simulation, quality gating,
/// corpus generation, training, evaluation and continual learning.
#[derive(Parser)]
#[command(name = "microcam", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay an IMU trace through the placement trigger
    SimulateTrigger(Args),
    /// Score images with the LoG sharpness gate
    AssessQuality(Args),
    /// Generate (or ingest) a corpus and write it with a manifest
    GenCorpus(Args),
    /// Train a model on the whole corpus
    Train(Args),
    /// Cross-validate, or score a checkpoint
    Evaluate(Args),
    /// Run a continual-learning task stream
    ClRun(Args),
    /// Check object/material pairs against the mapping table
    Validate(Args),
    /// Summarize earlier outputs; optionally time the pipeline stages
    Report(Args),
    /// List every config key
    Keys,
}

#[derive(clap::Args)]
struct Args {
    /// Run configuration (flat key = value)
    #[arg(short, long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::SimulateTrigger(a) => (Command::SimulateTrigger, a),
        Cmd::AssessQuality(a) => (Command::AssessQuality, a),
        Cmd::GenCorpus(a) => (Command::GenCorpus, a),
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::ClRun(a) => (Command::ClRun, a),
        Cmd::Validate(a) => (Command::Validate, a),
        Cmd::Report(a) => (Command::Report, a),
        Cmd::Keys => {
            for (k, doc) in KEYS {
                println!("{k:<28} {doc}");
            }
            return ExitCode::SUCCESS;
        }
    };
    let result = RunConfig::load(&args.config).and_then(|cfg| run(cmd, &cfg, &mut std::io::stdout()));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("microcam {}: {} error: {e}", cmd.name(), e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
