//! `coshare` command-line front end.

mod args;
mod bench;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::FileConfig;
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(a) => commands::ingest(cfg, a),
        Command::Analyze(a) => commands::analyze(cfg, a),
        Command::Simulate(a) => commands::simulate(cfg, a),
        Command::SweepAlpha(a) => commands::sweep_alpha(cfg, a),
        Command::PeerListen(a) => commands::peer_listen(cfg, a),
        Command::PeerInitiate(a) => commands::peer_initiate(cfg, a),
        Command::Bench(a) => commands::bench(cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
