use std::process::ExitCode;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;
use vidfuse_cli::commands::{dispatch, Cli};
use vidfuse_cli::error::RunError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapKind::DisplayHelp | ClapKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(&cli).map_err(anyhow::Error::from) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<RunError>()
                .map_or(1, |r| r.kind.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
