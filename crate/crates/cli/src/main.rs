// SPDX-License-Identifier: Apache-2.0

mod args;
mod commands;
mod inputs;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

/// Usage error: bad flags or inconsistent options.
pub const EXIT_USAGE: u8 = 64;
/// Data error: unreadable, malformed or unusable input.
pub const EXIT_DATA: u8 = 65;
/// An `--assert-*` threshold was missed.
pub const EXIT_ASSERT: u8 = 2;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Assertion(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(EXIT_ASSERT)
        }
    }
}
