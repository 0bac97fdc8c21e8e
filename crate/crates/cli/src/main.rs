//! `fraudjudger`: synthetic data, feature ingestion, model training and
//! evaluation, fraud detection, potential-fraud discovery and blacklist
//! upkeep.
//!
//! Exit codes: 0 ok, 1 usage, 2 IO or data, 3 numeric failure.

mod args;
mod blacklist;
mod commands;
mod context;
mod cycle;
mod error;
mod experiment;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::{Cli, Command};
use crate::context::Context;
use crate::error::{Result, EXIT_OK, EXIT_USAGE};

fn run(cli: Cli) -> Result<()> {
    let full_scale = matches!(&cli.command, Command::Train(t) if t.full_scale);
    let ctx = Context::new(cli.global, full_scale)?;
    let seed = Some(ctx.seed());
    let (name, out) = match &cli.command {
        Command::Synth => ("synth", commands::synth(&ctx)?),
        Command::Ingest(a) => ("ingest", commands::ingest(&ctx, a)?),
        Command::Train(a) => ("train", commands::train_model(&ctx, a)?),
        Command::Eval(a) => ("eval", commands::eval(&ctx, a)?),
        Command::Detect(a) => ("detect", commands::detect(&ctx, a)?),
        Command::Discover(a) => ("discover", commands::discover(&ctx, a)?),
        Command::Loop(a) => ("loop", cycle::run(&ctx, a)?),
        Command::Experiment(a) => ("experiment", experiment::run(&ctx, a)?),
        Command::Blacklist(a) => ("blacklist", commands::export_blacklist(&ctx, a)?),
    };
    out.finish(name, seed)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
