mod commands;
mod settings;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use settings::{Cli, UsageError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    let level = if cli.command.is_serve() {
        tracing_subscriber::filter::LevelFilter::INFO
    } else {
        tracing_subscriber::filter::LevelFilter::WARN
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = classify(&e);
            eprintln!("{}", json!({ "error": kind, "message": format!("{e:#}") }));
            ExitCode::from(code)
        }
    }
}

/// Bad input of any kind exits with 2; failures while running exit with 1.
fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    use alphawealth_core::Error as CoreError;
    use alphawealth_service::ServiceError;
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return ("config", 2);
        }
        if let Some(c) = cause.downcast_ref::<CoreError>() {
            return match c {
                CoreError::Domain(_) | CoreError::InvalidAllocation(_) => ("domain", 2),
                CoreError::Infeasible { .. } | CoreError::CapExceeded { .. } => ("infeasible", 1),
                _ => ("runtime", 1),
            };
        }
        if let Some(s) = cause.downcast_ref::<ServiceError>() {
            return match s {
                ServiceError::Config(_) | ServiceError::BadRequest(_) => ("config", 2),
                ServiceError::Core(CoreError::Domain(_)) => ("domain", 2),
                _ => (s.kind(), 1),
            };
        }
    }
    ("runtime", 1)
}
