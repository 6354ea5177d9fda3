mod args;
mod commands;
mod output;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::output::UsageError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::Convert(a) => commands::convert(a),
        Command::Synth(a) => commands::synth(a),
        Command::Clickmap(a) => commands::clickmap(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gap(a) => commands::gap(a),
        Command::Stats(a) => commands::stats(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Fitbox(a) => commands::fitbox(a),
        Command::Pipeline(a) => commands::pipeline(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<UsageError>().is_some() { 2 } else { 1 })
        }
    }
}
