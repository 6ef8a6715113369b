//! Command-line front end for `heightformer-core`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{exit, CliResult};

/// Parses `argv`, runs the chosen command, and returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::INVALID_INPUT } else { exit::OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    let cfg = cli.resolve_config()?;
    let out = &cli.global.out;
    match &cli.command {
        Command::BuildTable(a) => {
            let s = commands::cmd_build_table(&cfg, a, out)?;
            println!(
                "wrote {} grid {}x{}x{} features {}x{} valid {:.4}",
                s.path.display(),
                s.grid[0],
                s.grid[1],
                s.grid[2],
                s.feature_dims[0],
                s.feature_dims[1],
                s.valid_fraction
            );
            Ok(exit::OK)
        }
        Command::Forward(a) => {
            let s = commands::cmd_forward(&cfg, a, out)?;
            println!("{}", to_json(&s));
            Ok(exit::OK)
        }
        Command::Verify(a) => {
            let s = commands::cmd_verify(&cfg, a, out)?;
            for suite in &s.suites {
                eprint!("{suite}");
            }
            println!("{}", to_json(&s));
            Ok(s.exit_code())
        }
        Command::Bench(_) => {
            let r = commands::cmd_bench(&cfg, out)?;
            print!("{}", r.summary());
            Ok(exit::OK)
        }
    }
}

fn to_json<S: serde::Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).unwrap_or_default()
}
