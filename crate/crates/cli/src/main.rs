use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, warn};

use exitfsp_cli::commands::{run, Command};
use exitfsp_cli::config::RunConfig;
use exitfsp_cli::CliError;

/// Exit-time distributions and occupation measures of Markov chains by
/// finite state projection.
#[derive(Parser, Debug)]
#[command(name = "exitfsp", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Exit distribution and occupation measure on one truncation.
    Etfsp(Args),
    /// Truncated forward equation for the time-varying law.
    Fsp(Args),
    /// Monte Carlo exit samples by the Gillespie algorithm.
    Simulate(Args),
    /// Exit-tracking solves over a schedule of truncations.
    Sweep(Args),
    /// Deterministic Lotka-Volterra trajectories.
    LvPhase(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Random seed (overrides `oracle.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(cmd: Command, args: Args) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = args.out {
        cfg.output.dir = dir.to_string_lossy().into_owned();
    }
    if let Some(seed) = args.seed {
        match cfg.oracle.as_mut() {
            Some(o) => o.seed = seed,
            None => warn!("--seed ignored: the configuration has no [oracle] section"),
        }
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set up {n} threads: {e}")))?;
    }
    run(cmd, &cfg)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (cmd, args) = match cli.command {
        Cmd::Etfsp(a) => (Command::Etfsp, a),
        Cmd::Fsp(a) => (Command::Fsp, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::LvPhase(a) => (Command::LvPhase, a),
    };
    match execute(cmd, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("exitfsp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
