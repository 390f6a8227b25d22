use std::path::PathBuf;

use anyhow::Result;
use skm_core::{load_system, naive_solve, save_result, tskm_solve, Termination};

use crate::common::{SolverArgs, Status};

/// Repair the start point of a problem file.
#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Split equalities into inequality pairs instead of transforming.
    #[arg(long)]
    naive: bool,
    /// Keep per-checkpoint violations in the result.
    #[arg(long)]
    trace: bool,
    /// Where to write the result JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<Status> {
    let mut config = args.solver.config()?;
    config.record_trace = args.trace;
    let system = load_system(&args.input)?;
    let result = if args.naive {
        naive_solve(&system, &config)?
    } else {
        tskm_solve(&system, &config)?
    };
    if let Some(path) = &args.output {
        save_result(&result, path)?;
    }
    println!("termination: {:?}", result.termination);
    println!("iterations: {}", result.iterations);
    println!("max_ineq_violation: {:e}", result.max_ineq_violation);
    println!("max_eq_violation: {:e}", result.max_eq_violation);
    println!("distance_moved: {}", result.distance_moved);
    Ok(match result.termination {
        Termination::IterationCap => Status::NotConverged,
        _ => Status::Success,
    })
}
