//! `iadp` command-line front end.
//!
//! Subcommands:
//! - `run` simulates one episode.
//! - `compare` runs the three controllers on one scenario.
//! - `check` runs the built-in property checks.
//! - `plots` turns trajectory CSVs into gnuplot data files and scripts.

mod episode;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "iadp", version, about = "Incremental adaptive dynamic programming on the pendulum benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one episode and write its CSV and manifest.
    Run(RunArgs),
    /// Run iadp, zsadp and tadp on one scenario with a shared seed.
    Compare(RunArgs),
    /// Run the numerical property checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write figure data files and gnuplot scripts for trajectory CSVs.
    Plots {
        /// Trajectory CSV files written by `run` or `compare`.
        logs: Vec<PathBuf>,
        #[arg(long, env = "IADP_OUT_DIR", default_value = "out")]
        out_dir: PathBuf,
    },
}

#[derive(Args, Clone)]
pub struct RunArgs {
    /// Scenario preset: s1, s2 or s3.
    #[arg(long)]
    scenario: Option<String>,
    /// iadp, zsadp or tadp (ignored by `compare`).
    #[arg(long)]
    controller: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// backward_difference or ground_truth.
    #[arg(long)]
    xdot_source: Option<String>,
    /// Key-value config file; a run manifest also works.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "IADP_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// `key=value`, applied after the file and the other flags.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Diverged,
    CheckFailed,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Diverged => 2,
            Failure::CheckFailed => 3,
        }
    }
}

impl From<iadp::Error> for Failure {
    fn from(e: iadp::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn check(seed: u64) -> Result<(), Failure> {
    let outcomes = iadp::verify::run_all(seed);
    for o in &outcomes {
        println!("{} {:<24} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    if outcomes.iter().all(|o| o.passed) {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on bad usage, which is our divergence status.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => episode::run(&args),
        Command::Compare(args) => episode::compare(&args),
        Command::Check { seed } => check(seed),
        Command::Plots { logs, out_dir } => plots::emit(&logs, &out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(msg) => eprintln!("error: {msg}"),
                Failure::Diverged => eprintln!("episode diverged"),
                Failure::CheckFailed => eprintln!("property checks failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
