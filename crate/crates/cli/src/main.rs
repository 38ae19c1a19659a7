//! `rfmatch` command-line interface.

mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let body = json!({ "error": { "kind": "usage", "message": e.to_string().trim() } });
            eprintln!("{body}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(output) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(output.as_bytes());
            if !output.ends_with('\n') {
                let _ = stdout.write_all(b"\n");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut error = json!({ "kind": e.kind(), "message": e.to_string() });
            if let rfmatch::Error::Config { key, .. } = &e {
                error["key"] = json!(key);
            }
            eprintln!("{}", json!({ "error": error }));
            ExitCode::FAILURE
        }
    }
}
