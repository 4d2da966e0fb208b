//! Command-line driver: decoding, scoring, weight sweeps, synthetic data and
//! alignment dumps.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;

pub use error::CliError;

use args::{Cli, Command};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Decode(c) => commands::decode(c),
        Command::Eval(c) => commands::eval(c),
        Command::Sweep(c) => commands::sweep(c),
        Command::Synth(c) => commands::synth(c),
        Command::AlignDump(c) => commands::align_dump(c),
    }
}
