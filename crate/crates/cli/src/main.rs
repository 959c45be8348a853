use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use hom_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            match &outcome.path {
                Some(p) => eprintln!("wrote {}", p.display()),
                None => {
                    let _ = std::io::stdout().write_all(outcome.text.as_bytes());
                }
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: oracle disagreement exceeds tolerance");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
