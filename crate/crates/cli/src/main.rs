use std::process::ExitCode;

use clap::Parser;
use pairlab_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Some(dir)) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pairlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
