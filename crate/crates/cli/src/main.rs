mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutDir;

#[derive(Parser)]
#[command(name = "nadir", version, about = "Rare-event analysis of frequency nadirs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; omitted blocks take baseline values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RNG seed for multistarts, simulation and validation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also emit SVG plots.
    #[arg(long, global = true)]
    svg: bool,

    /// Write A and the Van Loan blocks for k* (most-likely only).
    #[arg(long, global = true)]
    dump_matrices: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Noise-free response to simultaneous outages.
    Deterministic,
    /// Most likely scenario leading to the nadir event.
    MostLikely,
    /// Grid sweep over sigma, lambda, mu or gamma.
    Sweep,
    /// Sweep over inertia.
    InertiaSweep,
    /// Crude Monte Carlo of the event probability.
    Simulate,
    /// Run the self-check suite.
    Validate,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(dir) = cli.out {
        cfg.output.dir = dir;
    }
    cfg.output.svg |= cli.svg;
    cfg.output.dump_matrices |= cli.dump_matrices;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = OutDir::create(&cfg.output.dir)?;
    match cli.command {
        Command::Deterministic => commands::deterministic(&cfg, &out),
        Command::MostLikely => commands::most_likely(&cfg, &out),
        Command::Sweep => commands::sweep(&cfg, &out),
        Command::InertiaSweep => commands::inertia(&cfg, &out),
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Validate => commands::validate(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
