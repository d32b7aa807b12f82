use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corrcurr::commands::{self, ConfigSource, Split};
use corrcurr::config::DEFAULT_CONFIG;
use corrcurr::output::{resolve_out_dir, OUT_DIR_ENV};
use corrcurr::CliResult;

#[derive(Parser)]
#[command(name = "corrcurr", version, about = "Curriculum-paced modality correlation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed for data generation and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset file to use instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Ablation to enable. Repeatable.
    #[arg(long = "ablation", value_name = "NAME", value_parser = clap::builder::PossibleValuesParser::new(corrcurr_core::Ablations::NAMES))]
    ablations: Vec<String>,
    /// Output directory.
    #[arg(short, long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Destination file.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Pre-train the difficulty-scoring correlation predictor.
    Pretrain(RunArgs),
    /// Pre-train, train and evaluate; writes the report files.
    #[command(alias = "run")]
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Reuse a pre-trained predictor instead of pre-training.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Evaluate a saved model.
    Eval {
        #[command(flatten)]
        common: Common,
        /// `model.json` written by `train`.
        #[arg(short, long)]
        model: PathBuf,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Run a loss sequence through the feeding state machine, or check a
    /// trajectory file against it.
    ReplayFeed {
        #[command(flatten)]
        common: Common,
        /// One loss per line.
        #[arg(long, conflicts_with = "trajectory", required_unless_present = "trajectory")]
        losses: Option<PathBuf>,
        /// `trajectory.jsonl` written by `train`.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Partition count for a loss sequence.
        #[arg(long, default_value_t = 10)]
        partitions: usize,
        /// Ablation to enable. Repeatable.
        #[arg(long = "ablation", value_name = "NAME")]
        ablations: Vec<String>,
    },
    /// Print an annotated default configuration.
    InitConfig,
}

fn source(common: Common, ablations: Vec<String>) -> ConfigSource {
    ConfigSource { path: common.config, sets: common.sets, seed: common.seed, data: common.data, ablations }
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::GenData { common, out } => {
            let cfg = source(common, Vec::new()).resolve()?;
            let out = out.unwrap_or_else(|| resolve_out_dir(None).join("dataset.txt"));
            commands::gen_data(&cfg, &out)
        }
        Command::Pretrain(args) => {
            let cfg = source(args.common, args.ablations).resolve()?;
            commands::pretrain(&cfg, &resolve_out_dir(args.out.as_deref()))
        }
        Command::Train { run, pretrained } => {
            let cfg = source(run.common, run.ablations).resolve()?;
            commands::train(&cfg, &resolve_out_dir(run.out.as_deref()), pretrained.as_deref()).map(|(_, msg)| msg)
        }
        Command::Eval { common, model, split } => {
            let cfg = source(common, Vec::new()).resolve()?;
            let result = commands::eval(&cfg, &model, split)?;
            Ok(format!("{}\n", serde_json::to_string(&result).unwrap_or_default()))
        }
        Command::ReplayFeed { common, losses, trajectory, partitions, ablations } => {
            let cfg = source(common, ablations).resolve()?;
            match (losses, trajectory) {
                (Some(l), _) => commands::replay_losses(&cfg, &l, partitions),
                (None, Some(t)) => commands::replay_trajectory(&cfg, &t),
                (None, None) => unreachable!("clap requires one of the inputs"),
            }
        }
        Command::InitConfig => Ok(DEFAULT_CONFIG.to_string()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
