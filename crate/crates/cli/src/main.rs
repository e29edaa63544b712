#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod report;

use std::fs;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use config::RunConfig;
use error::CliError;

fn main() -> ExitCode {
    let flags = match RunConfig::try_parse() {
        Ok(flags) => flags,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zenosim: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("Usage: zenosim <COMMAND> [OPTIONS]  (see --help)");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(flags: RunConfig) -> Result<(), CliError> {
    let merged = RunConfig::load(flags)?;
    let resolved = merged.resolved()?;
    if let Some(path) = &merged.dump_config {
        fs::write(path, resolved.to_json()? + "\n")
            .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    }
    commands::run(&resolved)
}
