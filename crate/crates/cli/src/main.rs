mod args;
mod assertion;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use guesswork_core::Error;

use args::{Cli, Command};
use output::{AssertionFailed, UsageError};

const EXIT_VALIDATION: u8 = 2;
const EXIT_ASSERTION: u8 = 3;
const EXIT_RESOURCE: u8 = 4;

/// Library field names that differ from the flag that sets them.
fn flag_name(field: &str) -> String {
    let f = match field {
        "m_sweep" => "m",
        other => other,
    };
    format!("--{}", f.replace('_', "-"))
}

fn classify(err: &anyhow::Error) -> (u8, String) {
    if let Some(e) = err.downcast_ref::<Error>() {
        let code = match e {
            Error::Resource { .. } => EXIT_RESOURCE,
            _ => EXIT_VALIDATION,
        };
        let msg = match e {
            Error::Config { field, .. } => format!("{}: {e}", flag_name(field)),
            Error::Domain { name, .. } => format!("{}: {e}", flag_name(name)),
            _ => e.to_string(),
        };
        return (code, msg);
    }
    if err.is::<AssertionFailed>() {
        return (EXIT_ASSERTION, err.to_string());
    }
    if err.is::<UsageError>() {
        return (EXIT_VALIDATION, err.to_string());
    }
    (1, format!("{err:#}"))
}

fn main() -> ExitCode {
    // clap exits with 2 on unknown or malformed flags.
    let cli = Cli::parse();
    let run = match &cli.command {
        Command::Rates(a) => commands::rates(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Concentration(a) => commands::concentration(a),
        Command::Keysize(a) => commands::keysize(a),
        Command::Table1(a) => commands::table1(a),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, msg) = classify(&e);
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
