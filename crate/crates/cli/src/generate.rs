use std::path::PathBuf;

use anyhow::Result;
use skm_core::generators::{gen_repair_problem, DEFAULT_VIOLATION_SCALE};
use skm_core::save_system;

use crate::common::Status;

/// Write a random feasible mixed system with an infeasible start point.
#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    q: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum violation of the start point.
    #[arg(long, default_value_t = DEFAULT_VIOLATION_SCALE)]
    scale: f64,
    #[arg(long)]
    output: PathBuf,
}

pub fn run(args: Args) -> Result<Status> {
    let inst = gen_repair_problem(args.n, args.p, args.q, args.seed, args.scale)?;
    save_system(&inst.system, &args.output)?;
    let y0 = inst.system.start();
    println!("start_violation: {:e}", inst.system.max_violation(&y0));
    Ok(Status::Success)
}
