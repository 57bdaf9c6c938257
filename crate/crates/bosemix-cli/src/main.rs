use std::process::ExitCode;

use bosemix_cli::{execute, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(doc) => {
            println!("{}", serde_json::to_string_pretty(&doc).expect("result serialises"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bosemix: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
