use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wgf_core::analysis::Scheme;

mod commands;
mod config;
mod error;
mod output;

use config::RunConfig;

/// Finite-volume Wasserstein gradient flow solver.
#[derive(Debug, Parser)]
#[command(name = "wgf-fv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// March one flow; writes summary.csv and final_state.csv.
    Run(Options),
    /// Fokker-Planck refinement study; writes convergence CSVs.
    Convergence(Options),
    /// Fokker-Planck dissipation curves of both schemes and the continuous reference.
    Dissipation(Options),
}

#[derive(Debug, Args)]
struct Options {
    #[arg(long)]
    config: PathBuf,
    /// ljko or euler; overrides `[run] scheme`.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(short, long)]
    verbose: bool,
    /// Worker threads for convergence levels.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Run(opts) | Command::Convergence(opts) | Command::Dissipation(opts)) = &cli.command;
    let level = if opts.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = RunConfig::load(&opts.config).and_then(|config| match &cli.command {
        Command::Run(o) => commands::cmd_run(&config, o.scheme),
        Command::Convergence(o) => commands::cmd_convergence(&config, o.scheme, o.jobs),
        Command::Dissipation(_) => commands::cmd_dissipation(&config),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wgf-fv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
