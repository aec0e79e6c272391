//! `mqs-hmm`: multiscale, fullscale and comparison runs from a config file.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mqs_hmm::config::RunMode;

#[derive(Debug, Parser)]
#[command(name = "mqs-hmm", version, about = "Two-scale eddy-current solver for soft magnetic composites")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-domain run; writes losses, probes, log and metadata.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `[run] mode`.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<RunMode>,
        /// Overrides `[run] threads` (0 = all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multiscale and reference run at each frequency; writes `sweep.csv`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        freqs: Vec<f64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss and probe errors of a multiscale run against a reference run.
    Compare {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        ms: PathBuf,
        /// CSV with `x_m,y_m` columns.
        #[arg(long)]
        probes: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run {
            config,
            mode,
            threads,
            out,
        } => commands::run(&config, mode, threads, out),
        Command::Sweep {
            config,
            freqs,
            threads,
            out,
        } => commands::sweep(&config, &freqs, threads, out),
        Command::Compare { reference, ms, probes } => commands::compare(&reference, &ms, &probes),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
