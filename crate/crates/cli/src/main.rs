mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use llmembed_core::Error;

use args::{Cli, Command};

/// Exit status for malformed command lines.
const EXIT_USAGE: u8 = 2;
const EXIT_FAILURE: u8 = 1;

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Predict(a) => commands::predict_cmd(a),
        Command::ReportCost(a) => commands::report_cost(a),
    }
}

/// One line: `error[code]: message`.
fn report(err: &anyhow::Error) -> String {
    let code = err
        .chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or("internal", Error::code);
    let msg = format!("{err:#}").replace('\n', " ");
    format!("error[{code}]: {msg}")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", report(&e));
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
