use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use soundscape_core::pipeline::{run, OutputFormat, RunSummary};

mod config;

use config::{parse_tol_range, FileConfig, Overrides};

const EXIT_FATAL: u8 = 1;
const EXIT_INCOMPLETE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "soundscape-metrics",
    version,
    about = "Welch PSD, third-octave levels and SPL for hydrophone recordings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process every file listed in the metadata CSV.
    Run(RunArgs),
}

#[derive(Parser)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Enable third-octave levels over LOW:HIGH Hz.
    #[arg(long, value_name = "LOW:HIGH", value_parser = parse_tol_arg)]
    tol: Option<(f64, f64)>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ndjson,
    Csv,
}

fn parse_tol_arg(s: &str) -> Result<(f64, f64), String> {
    parse_tol_range(s).map_err(|e| format!("{e:#}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Run(args) = Cli::parse().command;
    match execute(args) {
        Ok(summary) => {
            report(&summary);
            if summary.is_clean() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INCOMPLETE)
            }
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}

fn execute(args: RunArgs) -> anyhow::Result<RunSummary> {
    let overrides = Overrides {
        metadata_path: args.metadata,
        audio_dir: args.audio_dir,
        output_path: args.out,
        worker_count: args.workers,
        format: args.format.map(|f| match f {
            Format::Ndjson => OutputFormat::Ndjson,
            Format::Csv => OutputFormat::Csv,
        }),
        tol: args.tol,
    };
    let config = FileConfig::load(&args.config)?.resolve(overrides)?;
    log::info!(
        "processing {} with worker_count={}",
        config.metadata_path.display(),
        config.worker_count
    );
    Ok(run(&config)?)
}

fn report(summary: &RunSummary) {
    log::info!(
        "{} of {} files processed, {} records written, {} samples dropped",
        summary.files_processed,
        summary.files_in_csv,
        summary.records_emitted,
        summary.samples_dropped
    );
    for skipped in &summary.files_skipped {
        log::warn!("skipped {}: {}", skipped.name, skipped.reason);
    }
    if summary.segments_skipped > 0 {
        log::warn!(
            "{} segments shorter than one window",
            summary.segments_skipped
        );
    }
    if summary.records_emitted == 0 {
        log::warn!("no records were produced");
    }
}
