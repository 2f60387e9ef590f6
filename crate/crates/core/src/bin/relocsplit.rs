use std::process::ExitCode;

use clap::Parser;
use relocsplit::cli::{dispatch, Cli};

fn main() -> ExitCode {
    ExitCode::from(dispatch(Cli::parse()))
}
