//! `afk`: train keyword classifiers, build universal shift-robust
//! perturbations against them and evaluate the results.

mod commands;
mod common;
mod config;

use std::process::ExitCode;

use anyhow::{Context, Result};

use crate::config::{Cmd, RunConfig, ALL};

fn cli() -> clap::Command {
    clap::Command::new("afk")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Universal shift-robust audio perturbations")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(ALL.iter().map(Cmd::clap))
}

fn run() -> Result<()> {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().context("missing subcommand")?;
    let cmd = Cmd::from_name(name).context("unknown subcommand")?;
    if let Ok(n) = std::env::var("AFK_THREADS") {
        let n: usize = n
            .parse()
            .context("AFK_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let cfg = RunConfig::resolve(cmd, sub)?;
    commands::dispatch(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
