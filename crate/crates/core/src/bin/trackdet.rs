use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use trackdet::ablation::ablate;
use trackdet::commands;
use trackdet::pipeline::Mode;
use trackdet::Result;

/// Tracklet-conditioned detection and tracking.
///
/// Set RUST_LOG (e.g. RUST_LOG=info) for diagnostics on stderr.
#[derive(Debug, Parser)]
#[command(name = "trackdet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliMode {
    Integrated,
    Sequential,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic detection stream.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output JSON Lines file; `-` writes to stdout.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Detect and track over a detection stream.
    Track {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: CliMode,
        /// Add boxes propagated from tracklets (sequential only).
        #[arg(long)]
        propagate: bool,
        /// Report tracked boxes with their tracklet's mean score (sequential only).
        #[arg(long)]
        rescore: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV file; `-` writes to stdout.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Score track output against ground truth.
    Eval {
        /// Predicted rows (CSV).
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth: an annotated detection stream (.jsonl) or rows (CSV).
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Compare the sequential variants with the integrated tracker and run
    /// parameter sweeps.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: ReportFormat,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            output,
        } => {
            let mut c = commands::load_config(config.as_deref())?;
            if let Some(s) = seed {
                c.scene.seed = s;
            }
            let n = commands::simulate(&c, &output)?;
            info!("simulated {n} frames");
        }
        Command::Track {
            input,
            mode,
            propagate,
            rescore,
            config,
            output,
        } => {
            let c = commands::load_config(config.as_deref())?;
            let mode = match mode {
                CliMode::Integrated => Mode::Integrated,
                CliMode::Sequential => Mode::Sequential,
            };
            let n = commands::track(&c, &input, mode, propagate, rescore, &output)?;
            info!("wrote {n} rows");
        }
        Command::Eval {
            pred,
            gt,
            config,
            format,
        } => {
            let c = commands::load_config(config.as_deref())?;
            let report = commands::eval(&c, &pred, &gt)?;
            let text = match format {
                ReportFormat::Text => report.to_key_values(),
                ReportFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
                ReportFormat::Table => report.summary_table(),
            };
            print!("{text}");
        }
        Command::Ablate { config, format } => {
            let c = commands::load_config(config.as_deref())?;
            let report = ablate(&c)?;
            let text = match format {
                ReportFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
                ReportFormat::Text | ReportFormat::Table => report.to_table(),
            };
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
