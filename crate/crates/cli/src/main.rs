mod args;
mod commands;
mod common;
mod selftest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use noisy_consensus::{Error, Result};

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(a) => commands::analyze(&a),
        Command::Sweep(a) => commands::sweep_cmd(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Formation(a) => commands::formation(&a),
        Command::Selftest(a) => {
            if selftest::run(&a)? {
                Ok(())
            } else {
                Err(Error::Numerical("selftest failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
