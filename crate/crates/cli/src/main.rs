mod args;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use tvae_core::Error;

use args::{Cli, Command};
use settings::Settings;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        e if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut s = Settings::load(cli.config.as_deref())?;
    let seed = s.value("seed", cli.seed, 0u64)?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &mut s, seed),
        Command::Train(a) => commands::train_cmd(a, &mut s, seed),
        Command::Predict(a) => commands::predict(a, &mut s, seed),
        Command::Evaluate(a) => commands::evaluate(a, &mut s, seed),
        Command::Ablate(a) => commands::ablate(a, &mut s, seed),
        Command::Search(a) => commands::search(a, &mut s, seed),
        Command::Bench(a) => commands::bench(a, &mut s, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
