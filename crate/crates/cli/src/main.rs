use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = ttdsim_cli::Cli::parse();
    ExitCode::from(ttdsim_cli::execute(&cli))
}
