use std::process::ExitCode;

use clap::Parser;

use nchj_cli::app::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            for f in &summary.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::from(summary.outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
