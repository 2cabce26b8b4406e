use std::process::ExitCode;

use clap::Parser;
use cpgbn_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cpgbn_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(cpgbn_cli::exit_code(&e) as u8)
        }
    }
}
