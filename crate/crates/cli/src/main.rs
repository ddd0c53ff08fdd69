// SPDX-License-Identifier: Apache-2.0

use std::process::ExitCode;

use clap::Parser;
use featherloop_cli::{diagnostic, run, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            ExitCode::FAILURE
        }
    }
}
