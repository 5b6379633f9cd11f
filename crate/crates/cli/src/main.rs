//! `ndsm`: synthesize cities, train and apply land-cover classifiers, run
//! cross-city and sample-proportion experiments.

mod commands;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{EvalArgs, ExperimentArgs, PredictArgs, SynthArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "ndsm", version, about = "Surface-aware land-cover segmentation toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct GlobalArgs {
    /// Base random seed
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all logical cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Debug-level logging
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city and its manifest
    Synth(SynthArgs),
    /// Train a network or SVM on the training split of a manifest
    Train(TrainArgs),
    /// Classify one tile
    Predict(PredictArgs),
    /// Score a model on one split of a manifest
    Eval(EvalArgs),
    /// Train on one city, test on held-out tiles and on another city
    CrossCity(ExperimentArgs),
    /// Repeat training over shrinking sample proportions
    Sweep(ExperimentArgs),
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(&cli.global, a),
        Command::Train(a) => commands::train(&cli.global, a),
        Command::Predict(a) => commands::predict(&cli.global, a),
        Command::Eval(a) => commands::eval(&cli.global, a),
        Command::CrossCity(a) => commands::cross_city(&cli.global, a),
        Command::Sweep(a) => commands::sweep(&cli.global, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.global.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(if commands::is_numeric(&e) { EXIT_NUMERIC } else { EXIT_DATA })
        }
    }
}
