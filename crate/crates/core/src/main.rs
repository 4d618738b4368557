//! Command-line front end: run experiments from a config file, or render a
//! previously written result table as a text summary.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sasfield::config::{parse_with_overrides, Operation};
use sasfield::error::{Error, Result};
use sasfield::experiment;
use sasfield::report::report;
use sasfield::table::ResultTable;

#[derive(Parser)]
#[command(
    name = "sasfield",
    version,
    about = "Simulate stationary symmetric alpha-stable random fields and \
             verify their ergodic dichotomy"
)]
struct Cli {
    /// Experiment configuration file (key = value lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write output here instead of stdout.  For `report`, a companion
    /// curves CSV is written next to it.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Root seed, overriding the config file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for replications; defaults to the available cores.
    #[arg(long, global = true, value_name = "INT")]
    jobs: Option<usize>,

    /// Narrate progress on stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replications and record the maximum field amplitude of each.
    Simulate,
    /// Classify the kernel's flow as dissipative or conservative.
    Classify,
    /// Record partial maxima along the tau ladder under both normalizations.
    Maxima,
    /// Run the maxima ladder and test the top rung against its Frechet limit.
    LimitTest,
    /// Estimate the shared-site probability curve along the tau ladder.
    ConditionCheck,
    /// Summarize a result table written by a previous run.
    Report {
        /// CSV result table to summarize.
        table: PathBuf,
    },
}

fn require_config(path: &Option<PathBuf>) -> Result<String> {
    let path = path
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required for this command".into()))?;
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Companion path for the report curves: `summary.txt` -> `summary.curves.csv`.
fn companion_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".to_string());
    out.with_file_name(format!("{stem}.curves.csv"))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(Error::from),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run_operation(cli: &Cli, operation: Operation) -> Result<()> {
    let text = require_config(&cli.config)?;
    let config = parse_with_overrides(&text, cli.seed, Some(operation))?;
    if cli.verbose {
        eprintln!(
            "running '{}' ({operation}) with seed {} [config {}]",
            config.experiment,
            config.seed,
            config.hash()
        );
    }
    let table = experiment::run(&config, cli.jobs)?;
    if cli.verbose {
        eprintln!("{} result rows", table.len());
    }
    let out = cli.out.clone().or_else(|| config.output.clone());
    match out {
        Some(path) => table.write_csv(&path),
        None => {
            print!("{}", table.to_csv_string()?);
            Ok(())
        }
    }
}

fn run_report(cli: &Cli, table_path: &Path) -> Result<()> {
    let table = ResultTable::read_csv(table_path)?;
    let summary = report(&table)?;
    emit(&cli.out, &summary.text)?;
    if let Some(out) = &cli.out {
        std::fs::write(companion_path(out), &summary.companion_csv)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate => run_operation(cli, Operation::Simulate),
        Command::Classify => run_operation(cli, Operation::Classify),
        Command::Maxima => run_operation(cli, Operation::Maxima),
        Command::LimitTest => run_operation(cli, Operation::LimitTest),
        Command::ConditionCheck => run_operation(cli, Operation::ConditionCheck),
        Command::Report { table } => run_report(cli, table),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
