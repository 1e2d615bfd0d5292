use std::process::ExitCode;

use clap::Parser;

use amenvis::cli::{exit_code_for, resolve_config, run, Cli, Command, EXIT_OK};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve_config(&cli).and_then(|cfg| run(&cli.command, &cfg));
    match result {
        Ok(outcome) => {
            if cli.command == Command::ShowConfig {
                print!("{}", outcome.summary);
                return ExitCode::from(EXIT_OK);
            }
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
