//! `homoclinic run <config>` / `homoclinic resume <dir>`.
//!
//! Exit codes: 0 on completion (also with zero solutions, or after a
//! `--stop-after` interruption), 1 on config, i/o, checkpoint or numerical
//! errors, 2 when L is not symmetric or a is negative.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use homoclinic::pipeline::{self, RunOptions, RunStatus};

#[derive(Parser, Debug)]
#[command(
    name = "homoclinic",
    version,
    about = "Multiple homoclinic solutions of a subquadratic Hamiltonian system"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,

    /// Stop after this many finished seeds, leaving a checkpoint.
    #[arg(long, global = true, hide = true)]
    stop_after: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline from a TOML config.
    Run { config: PathBuf },
    /// Continue an interrupted run from its directory.
    Resume { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: cannot start the worker pool: {e}");
            return ExitCode::from(1);
        }
    }

    let opts = RunOptions {
        stop_after: cli.stop_after,
    };
    let result = match &cli.command {
        Command::Run { config } => pipeline::run(config, &opts),
        Command::Resume { dir } => pipeline::resume(dir, &opts),
    };
    match result {
        Ok(RunStatus::Completed { dir, solutions }) => {
            println!("{solutions} solution(s) written to {}", dir.display());
            ExitCode::SUCCESS
        }
        Ok(RunStatus::Interrupted { dir, done, total }) => {
            println!(
                "stopped after {done} of {total} seeds; continue with `homoclinic resume {}`",
                dir.display()
            );
            ExitCode::SUCCESS
        }
        Ok(RunStatus::AlreadyComplete { dir }) => {
            println!("{} is already complete", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
