use std::path::PathBuf;
use std::process::ExitCode;

use bft_core::pipeline::{ledger_status, load_config, Pipeline, RunOptions, Stage};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

/// Build instruction-tuning data from web text: backtranslate, filter,
/// rewrite, assemble and analyze.
#[derive(Debug, Parser)]
#[command(name = "bft", version)]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Continue a non-empty ledger.
    #[arg(long, global = true)]
    resume: bool,
    /// Accept a ledger written under a different configuration.
    #[arg(long, global = true)]
    force: bool,
    /// Treat malformed input records as fatal.
    #[arg(long, global = true)]
    strict: bool,
    /// Abort after this many ledger writes (fault injection).
    #[arg(long, global = true, hide = true)]
    crash_after: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stream, length-filter and register corpus documents.
    Ingest,
    /// Generate instructions with the backward model.
    Backtranslate,
    /// Score pairs with the forward model.
    Score,
    /// Keep only score-5 pairs.
    Filter,
    /// Rewrite responses with the aligned model.
    Rewrite,
    /// Answer bare instructions with the aligned model.
    Distill,
    /// Export tagged fine-tuning datasets.
    Build,
    /// Write the analysis report.
    Analyze,
    /// Run every enabled stage in order.
    Run,
    /// Summarize the ledger.
    Status {
        /// Ledger file; defaults to the one named in the config.
        #[arg(long, value_name = "PATH")]
        ledger: Option<PathBuf>,
    },
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Backtranslate => Stage::Backtranslate,
            Command::Score => Stage::Score,
            Command::Filter => Stage::Filter,
            Command::Rewrite => Stage::Rewrite,
            Command::Distill => Stage::Distill,
            Command::Build => Stage::Build,
            Command::Analyze => Stage::Analyze,
            Command::Run | Command::Status { .. } => return None,
        })
    }
}

fn config_path(cli: &Cli) -> anyhow::Result<&PathBuf> {
    cli.config
        .as_ref()
        .ok_or_else(|| bft_core::Error::Config("--config <PATH> is required".into()).into())
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    if let Command::Status { ledger } = &cli.command {
        let path = match ledger {
            Some(path) => path.clone(),
            None => load_config(config_path(cli)?)?.paths.ledger,
        };
        let report = ledger_status(&path)?;
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }

    let config = load_config(config_path(cli)?)?;
    let options = RunOptions {
        strict: cli.strict,
        force: cli.force,
        resume: cli.resume,
        crash_after: cli.crash_after,
    };
    let pipeline = Pipeline::new(config, options)?;
    match cli.command.stage() {
        Some(stage) => {
            let mut ledger = pipeline.open_ledger(stage == Stage::Ingest)?;
            let summary = pipeline.run_stage(stage, &mut ledger)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        None => {
            let manifest = pipeline.run_all()?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config_error = err
                .downcast_ref::<bft_core::Error>()
                .is_some_and(bft_core::Error::is_config_error);
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
