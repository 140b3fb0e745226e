//! `coalmap`: exposed-coal mapping from Landsat surface reflectance.
//!
//! Exit codes: 0 success, 2 bad configuration, 3 I/O failure, 4 data invariant violation.
//! Failures print one line, `error code=<n> kind=<kind>: <message>`, on stderr.

mod commands;
mod config;
mod error;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

#[derive(Debug, Parser)]
#[command(
    name = "coalmap",
    version,
    about = "Map exposed coal from multispectral surface reflectance"
)]
struct Cli {
    /// JSON configuration (band_map, scale_offset, pipeline, n_ec, n_bg, seed); flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify a scene into an EC mask
    Classify(commands::ClassifyArgs),
    /// Run ACMI and BCI with identical post-processing and compare them
    Compare(commands::CompareArgs),
    /// Assess a mask against reference polygons or a reference raster
    Assess(commands::AssessArgs),
    /// Per-class percentiles and pairwise Jeffries–Matusita separability
    Stats(commands::StatsArgs),
    /// Generate a synthetic scene and its ground truth
    Synth(commands::SynthArgs),
}

fn run(cli: &Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let mut out = Outputs::default();
    match &cli.command {
        Command::Classify(a) => commands::classify(a, &file, &mut out)?,
        Command::Compare(a) => commands::compare(a, &file, &mut out)?,
        Command::Assess(a) => commands::assess(a, &file, &mut out)?,
        Command::Stats(a) => commands::stats(a, &mut out)?,
        Command::Synth(a) => commands::synth(a, &file, &mut out)?,
    }
    out.commit();
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // clap's message spans several lines; keep the part before the usage block
            let msg = e.to_string();
            let text: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            let err = CliError::Config(text.join(" ").trim_start_matches("error: ").to_string());
            eprintln!("{}", err.line());
            return ExitCode::from(err.exit_code());
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
