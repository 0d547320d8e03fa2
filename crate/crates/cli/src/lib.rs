//! File formats, exports, plots and the `ridgenet` command line.

pub mod cli;
pub mod commands;
pub mod error;
pub mod export;
pub mod io;
pub mod plot;

use std::time::Instant;

use clap::Parser;
use serde_json::json;

pub use error::{CliError, CliResult};

/// Exit status of a run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Runs the CLI on `argv` (program name first), printing to stdout and
/// stderr. Returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match cli::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            eprint!("{rendered}");
            return EXIT_USAGE;
        }
    };
    let start = Instant::now();
    match commands::run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            let timings = json!({
                "command": cli.command.name(),
                "seconds": start.elapsed().as_secs_f64(),
            });
            let path = cli.out_dir().join(format!("{}.timings.json", cli.command.name()));
            if let Err(e) = io::write_atomic(&path, &format!("{timings}\n")) {
                eprintln!("{}", e.report());
                return EXIT_FAILURE;
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.report());
            EXIT_FAILURE
        }
    }
}
