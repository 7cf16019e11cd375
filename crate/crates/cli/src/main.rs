//! `crafter-coop`: run episodes and sweeps, and inspect their artifacts.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 integrity
//! failure (corrupt or tampered records and graphs).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crafter_coop::policy::BaselineKind;
use thiserror::Error;

use config::{BackendKind, Overrides, RunSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Integrity(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "crafter-coop", version, about = "Multi-agent crafting gridworld runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one or more episodes and write records, graphs, messages and metrics.
    Run {
        /// TOML config file; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// First seed; further runs use consecutive seeds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        agents: Option<u32>,
        /// basic, mem or mem_comm.
        #[arg(long)]
        baseline: Option<BaselineKind>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long)]
        runs: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_ticks: Option<u64>,
    },
    /// Print the response schema document.
    Schema,
    /// Convert a saved knowledge graph (JSON) to dot.
    ExportGraph {
        input: PathBuf,
        /// dot or json.
        #[arg(long, default_value = "dot")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-simulate a record and verify every tick.
    Replay {
        record: PathBuf,
        /// Also write the per-agent trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Aggregate record files or run directories into a milestone table.
    Table {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
        /// Also write metrics.txt and metrics.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            seed,
            agents,
            baseline,
            backend,
            runs,
            out,
            max_ticks,
        } => {
            let spec = match &config {
                Some(path) => RunSpec::load(path)?,
                None => RunSpec::default(),
            };
            let overrides = Overrides {
                seed,
                agents,
                baseline,
                backend,
                runs,
                out,
                max_ticks,
            };
            commands::run(&spec.resolve(&overrides)?)
        }
        Command::Schema => commands::schema(),
        Command::ExportGraph { input, format, out } => commands::export_graph(&input, &format, out.as_deref()),
        Command::Replay { record, trace } => commands::replay_record(&record, trace.as_deref()),
        Command::Table { inputs, csv, out } => commands::table(&inputs, csv, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
