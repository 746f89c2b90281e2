//! `missauditor`: runs the audit pipeline one stage at a time against a
//! working directory, writing a manifest per invocation.

mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use chrono::Utc;
use clap::Parser;

use missauditor_core::pipeline::{Layout, RunManifest};
use missauditor_core::{Error, ErrorKind};

use args::Cli;

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => EXIT_VALIDATION,
        ErrorKind::Io => EXIT_IO,
        ErrorKind::Internal => EXIT_INTERNAL,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let layout = Layout::new(&cli.data_dir);
    let name = cli.command.name();
    let started_at = Utc::now();
    let clock = Instant::now();
    let result = commands::resolve_settings(cli.config.as_deref(), &cli.data_dir, cli.seed, &cli.command)
        .and_then(|settings| commands::run(&cli.command, &layout, &settings).map(|o| (settings, o)));
    let (settings, outcome) = match result {
        Ok(v) => v,
        Err(e) => {
            eprintln!("missauditor {name}: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let summary = outcome.report.summary.clone();
    let manifest = RunManifest::new(name, &settings, outcome.report, started_at, clock);
    if let Err(e) = manifest.write(&layout) {
        eprintln!("missauditor {name}: cannot write manifest: {e}");
        return ExitCode::from(exit_code(&e));
    }
    let text = outcome
        .text
        .unwrap_or_else(|| serde_json::to_string_pretty(&summary).unwrap_or_default());
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    ExitCode::SUCCESS
}
