mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::Cli;
use commands::CliError;

/// Category of the first error in the chain that carries one.
fn category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.category();
        }
        if let Some(e) = cause.downcast_ref::<cadmr::Error>() {
            return e.category();
        }
    }
    "error"
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error[usage]: {}", e.to_string().lines().next().unwrap_or_default());
            return ExitCode::from(2);
        }
    };
    let sub = matches.subcommand().map(|(_, m)| m.clone()).expect("a verb is required");
    match commands::dispatch(cli.verb, &sub, argv.into_iter().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{}]: {msg}", category(&e));
            ExitCode::FAILURE
        }
    }
}
