//! `skm`: repair points against mixed linear constraints and run the
//! verification experiments.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 a solve hit its iteration
//! cap, 3 a gradient check failed.

mod bench;
mod common;
mod generate;
mod gradcheck;
mod project;
mod sweep;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "skm", version, about = "Null-space sampling Kaczmarz-Motzkin repair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    Project(project::Args),
    Sweep(sweep::Args),
    Bench(bench::Args),
    Gradcheck(gradcheck::Args),
    Generate(generate::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Project(a) => project::run(a),
        Command::Sweep(a) => sweep::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
        Command::Generate(a) => generate::run(a),
    };
    match outcome {
        Ok(status) => status.into(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
