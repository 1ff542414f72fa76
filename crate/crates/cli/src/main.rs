#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cli;
mod commands;
mod data;
mod error;
mod model;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::error::{CliError, CliResult};

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    }
    let seed = cli.seed;
    match &cli.command {
        Command::Fit(a) => commands::fit(a, seed),
        Command::Predict(a) => commands::predict(a, seed),
        Command::Path(a) => commands::path(a, seed),
        Command::Theory(a) => commands::theory(a, seed),
        Command::Screen(a) => commands::screen(a, seed),
        Command::Oracle(a) => commands::oracle(a, seed),
        Command::Simulate(a) => commands::simulate(a, seed),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        log::debug!("{e:?}");
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
