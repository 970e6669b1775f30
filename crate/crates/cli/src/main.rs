use std::process::ExitCode;

use clap::Parser;
use mgplan_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mgplan: error[{}]: {e}", e.name());
            ExitCode::from(e.exit_code())
        }
    }
}
