use std::process::ExitCode;

use bandperm_cli::{run::run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = cli.command.split();
    let outcome = flags.resolve(command).and_then(|cfg| run(&cfg).map(|files| (cfg, files)));
    match outcome {
        Ok((cfg, files)) => {
            for f in files {
                println!("{}", cfg.output_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
