use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = catsift::Cli::parse();
    match catsift::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
