use std::process::ExitCode;

use clap::Parser;
use vdpt_service::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = serde_json::to_string(&e.body()).unwrap_or_else(|_| format!("{{\"error\":\"{e}\"}}"));
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
