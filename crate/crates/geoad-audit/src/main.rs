use std::process::ExitCode;

use clap::Parser;

use geoad_audit::cli::{execute, Cli};

fn main() -> ExitCode {
    // Usage errors exit with status 2 via clap; runtime and validation
    // failures map to 1.
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
