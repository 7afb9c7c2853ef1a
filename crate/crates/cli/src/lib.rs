//! Batch front end for the `mvlidarnet` library: segmentation and detection
//! over scan directories, evaluation, benchmarking and BEV images.
//!
//! Exit codes of [`run`]: `0` success, `1` a file or evaluation failed,
//! `2` bad configuration.

pub mod args;
pub mod commands;
pub mod error;
pub mod fsutil;
pub mod image;
pub mod scene;
pub mod stats;

use log::error;
use serde::Serialize;

pub use args::Cli;
use args::Command;
pub use error::{CliError, CliResult};

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("reports serialize")
    );
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Segment(a) | Command::Detect(a) => {
            let summary = match cli.command {
                Command::Segment(_) => commands::segment(a)?,
                _ => commands::detect(a)?,
            };
            print_json(&summary);
            if !summary.failed.is_empty() {
                return Err(CliError::Failures {
                    failed: summary.failed.len(),
                    total: summary.failed.len() + summary.processed,
                });
            }
        }
        Command::EvalSeg(a) => print!("{}", commands::eval_seg(a)?.to_table()),
        Command::EvalDet(a) => print!("{}", commands::eval_det(a)?.to_table()),
        Command::Bench(a) => print_json(&commands::bench(a)?),
        Command::Viz(a) => println!("{}", commands::viz(a)?.display()),
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
