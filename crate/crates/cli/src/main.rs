//! `s2p`: train, evaluate and run sketch/photo translation models.

mod commands;
mod manifest;
mod outcome;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "s2p", version, about = "Open-domain sketch-to-photo translation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

/// Options every command accepts.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (receives run_manifest.json).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// Run configuration sources, applied file first and then overrides in order.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.strategy=none`; repeatable, last wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Train all five networks.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Resume even if the checkpoint was made with a different configuration.
        #[arg(long)]
        force: bool,
    },
    /// Fit the photo classifier used to score synthesized photos.
    TrainJudge(commands::JudgeArgs),
    /// Synthesize the test set and report FID and accuracy per split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Judge file written by `train-judge`.
        #[arg(long)]
        judge: PathBuf,
        /// Dataset root holding test_sketches/ and photos/.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated subset of full,in,open.
        #[arg(long, default_value = "full,in,open")]
        splits: String,
    },
    /// Turn sketches into photos of the given class.
    Synthesize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        label: String,
        /// Output edge in pixels (default: the training resolution).
        #[arg(long)]
        size: Option<usize>,
        /// Sketch files or glob patterns.
        #[arg(required = true)]
        inputs: Vec<String>,
    },
    /// Turn photos into freehand-style sketches.
    ExtractSketch {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        size: Option<usize>,
        /// Photo files or glob patterns.
        #[arg(required = true)]
        inputs: Vec<String>,
    },
    /// Serve the HTTP inference API.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Extra sketch-extraction checkpoint, `id=path`; repeatable.
        #[arg(long = "style", value_name = "ID=PATH")]
        styles: Vec<String>,
        /// Allowed browser origin; repeatable. None allows any origin.
        #[arg(long = "cors-origin", value_name = "ORIGIN")]
        cors_origins: Vec<String>,
    },
    /// Write the sketch pool stored in a checkpoint as PNGs plus labels.
    DumpPool {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write a small synthetic two-class dataset.
    ToyData {
        /// Image edge in pixels.
        #[arg(long, default_value_t = 64)]
        size: u32,
    },
}

fn command() -> clap::Command {
    let keys = format!("Configuration keys:\n{}", s2p_core::config::keys_help());
    Cli::command()
        .after_help(keys.clone())
        .mut_subcommand("train", |c| c.after_help(keys.clone()))
        .mut_subcommand("train-judge", |c| c.after_help(keys))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();
    let matches = command().get_matches();
    let args = match Cli::from_arg_matches(&matches) {
        Ok(a) => a,
        Err(e) => e.exit(),
    };
    let common = args.common;
    let result = match args.command {
        Cmd::Train { config, resume, force } => commands::train(&common, &config, resume, force),
        Cmd::TrainJudge(judge) => commands::train_judge(&common, &judge),
        Cmd::Evaluate { checkpoint, judge, data, splits } => {
            commands::evaluate(&common, &checkpoint, &judge, &data, &splits)
        }
        Cmd::Synthesize { checkpoint, label, size, inputs } => {
            commands::synthesize(&common, &checkpoint, &label, size, &inputs)
        }
        Cmd::ExtractSketch { checkpoint, size, inputs } => {
            commands::extract_sketch(&common, &checkpoint, size, &inputs)
        }
        Cmd::Serve { checkpoint, host, port, styles, cors_origins } => {
            commands::serve(&common, checkpoint, host, port, &styles, cors_origins)
        }
        Cmd::DumpPool { checkpoint } => commands::dump_pool(&common, &checkpoint),
        Cmd::ToyData { size } => commands::toy_data(&common, size),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code() as u8)
        }
    }
}
