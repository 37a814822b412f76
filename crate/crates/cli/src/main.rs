//! Command-line entry point: `kinn tag|train|eval|explain|synth`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinn::commands::{run_eval, run_explain, run_synth, run_tag, run_train, CommandOutput};
use kinn::config::{Overrides, RunConfig};
use kinn::synth::SYNTH_SEED;

#[derive(Parser)]
#[command(name = "kinn", version, about = "Knowledge-infused text classification with explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tag the dataset with lexicon concepts.
    Tag(RunArgs),
    /// Train a model on the TRAIN split.
    Train(RunArgs),
    /// Evaluate the trained model on the TEST split.
    Eval(RunArgs),
    /// Write explanation reports for tagged documents.
    Explain {
        #[command(flatten)]
        run: RunArgs,
        /// Document ids from the tagged corpus.
        #[arg(required = true)]
        doc_ids: Vec<String>,
    },
    /// Write the synthetic lexicon and corpora.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = SYNTH_SEED)]
        seed: u64,
    },
}

fn load(args: &RunArgs) -> kinn::Result<RunConfig> {
    let cfg = RunConfig::load(
        &args.config,
        &Overrides {
            seed: args.seed,
            out: args.out.clone(),
        },
    )?;
    eprintln!("resolved config (seed {}):\n{}", cfg.seed, cfg.echo());
    Ok(cfg)
}

fn run(cli: Cli) -> kinn::Result<CommandOutput> {
    match cli.command {
        Command::Tag(args) => run_tag(&load(&args)?),
        Command::Train(args) => run_train(&load(&args)?),
        Command::Eval(args) => {
            let (report, out) = run_eval(&load(&args)?)?;
            let m = &report.metrics;
            println!(
                "{} documents: precision {:.4} recall {:.4} f1 {:.4} mcc {:.4}",
                report.documents, m.precision_macro, m.recall_macro, m.f1_macro, m.mcc
            );
            Ok(out)
        }
        Command::Explain { run, doc_ids } => run_explain(&load(&run)?, &doc_ids),
        Command::Synth { dir, seed } => {
            eprintln!("synthetic bundle seed {seed}");
            run_synth(&dir, seed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            for path in out.written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
