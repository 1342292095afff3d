use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stacklight_cli::commands::{self, Ctx, EvalArgs, RunArgs, SweepArgs, SynthArgs, TrainArgs};
use stacklight_cli::{CheckFailed, EXIT_CHECK_FAILED};

/// Stack-light monitoring: synthetic data, classifier training, pipeline
/// runs over frame directories, and evaluation.
#[derive(Parser, Debug)]
#[command(name = "stacklight", version)]
struct Cli {
    /// Seed for every random choice (default: the config's, else 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Exit with status 3 when an acceptance threshold is missed.
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render synthetic frames with a JSONL manifest.
    Synth(SynthArgs),
    /// Train the light-combination classifier on a generated crop set.
    Train(TrainArgs),
    /// Track machine states over a directory of frames.
    Run(RunArgs),
    /// Evaluate the classifier and the detector.
    Eval(EvalArgs),
    /// Crop-size × degradation accuracy sweep.
    Sweep(SweepArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = Ctx::new(cli.seed, cli.config.as_deref(), cli.out.clone(), cli.check).and_then(|ctx| match &cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a).map(drop),
        Command::Run(a) => commands::run(&ctx, a).map(drop),
        Command::Eval(a) => commands::eval(&ctx, a).map(drop),
        Command::Sweep(a) => commands::sweep(&ctx, a).map(drop),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<CheckFailed>() => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CHECK_FAILED as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
