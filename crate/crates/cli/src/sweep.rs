use std::path::PathBuf;

use anyhow::{bail, Result};
use rayon::prelude::*;
use skm_core::generators::{gen_repair_problem, DEFAULT_VIOLATION_SCALE};
use skm_core::oracle::{distance_to_feasible, MAX_ORACLE_DIM, MAX_ORACLE_ROWS};
use skm_core::skm::{DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use skm_core::{tskm_solve, Beta, ConstraintSystem, SkmConfig, Termination, Variant};

use crate::common::{
    csv_writer, instance_shape, median, parse_values, thread_pool, timed, trial_seed, Status,
};

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Delta,
    Beta,
}

/// Vary delta or beta over generated instances.
#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long, value_enum)]
    param: Param,
    /// Comma list or inclusive range lo:hi:step.
    #[arg(long)]
    values: String,
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "basic")]
    variant: Variant,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
    #[arg(long)]
    csv: PathBuf,
    /// Leave wall_time_ns empty so reruns produce identical files.
    #[arg(long)]
    no_timing: bool,
}

const HEADER: [&str; 8] = [
    "param_value",
    "dim",
    "trial",
    "iterations",
    "wall_time_ns",
    "max_violation",
    "distance_moved",
    "oracle_distance",
];

struct Trial {
    system: ConstraintSystem,
    seed: u64,
    oracle: Option<f64>,
}

struct Row {
    iterations: usize,
    wall_ns: u128,
    max_violation: f64,
    distance: f64,
    converged: bool,
}

pub fn run(args: Args) -> Result<Status> {
    let values = parse_values(&args.values)?;
    if args.param == Param::Beta && values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
        bail!("beta values must be positive integers");
    }
    if args.dims.iter().any(|&n| n == 0) {
        bail!("dims must be positive");
    }
    let base = SkmConfig {
        max_iters: args.max_iters,
        tolerance: args.tol,
        variant: args.variant,
        ..Default::default()
    };
    base.validate()?;
    let pool = thread_pool()?;

    let cells: Vec<(usize, usize)> = (0..args.dims.len())
        .flat_map(|d| (0..args.trials).map(move |t| (d, t)))
        .collect();
    let trials: Vec<Trial> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, t)| {
                let n = args.dims[d];
                let (p, q) = instance_shape(n);
                let seed = trial_seed(args.seed, n, t);
                let system = gen_repair_problem(n, p, q, seed, DEFAULT_VIOLATION_SCALE)?.system;
                let oracle = if n <= MAX_ORACLE_DIM && p <= MAX_ORACLE_ROWS {
                    Some(distance_to_feasible(&system, &system.start())?)
                } else {
                    None
                };
                Ok(Trial {
                    system,
                    seed,
                    oracle,
                })
            })
            .collect::<Result<_>>()
    })?;

    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|v| (0..trials.len()).map(move |c| (v, c)))
        .collect();
    let rows: Vec<Row> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, c)| {
                let trial = &trials[c];
                let mut config = SkmConfig {
                    seed: trial.seed,
                    ..base.clone()
                };
                match args.param {
                    Param::Delta => config.delta = values[v],
                    Param::Beta => config.beta = Beta::Fixed(values[v] as usize),
                }
                config.validate()?;
                let (result, wall_ns) = timed(|| tskm_solve(&trial.system, &config));
                let result = result?;
                Ok(Row {
                    iterations: result.iterations,
                    wall_ns,
                    max_violation: result.max_ineq_violation.max(result.max_eq_violation),
                    distance: result.distance_moved,
                    converged: result.termination != Termination::IterationCap,
                })
            })
            .collect::<Result<_>>()
    })?;

    let mut out = csv_writer(&args.csv, &HEADER)?;
    for (&(v, c), row) in jobs.iter().zip(&rows) {
        let (d, t) = cells[c];
        out.write_record([
            values[v].to_string(),
            args.dims[d].to_string(),
            t.to_string(),
            row.iterations.to_string(),
            if args.no_timing {
                String::new()
            } else {
                row.wall_ns.to_string()
            },
            row.max_violation.to_string(),
            row.distance.to_string(),
            trials[c].oracle.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;

    let per_value = trials.len();
    for (v, value) in values.iter().enumerate() {
        for (d, dim) in args.dims.iter().enumerate() {
            let picked: Vec<(&Row, &Trial)> = (0..per_value)
                .filter(|&c| cells[c].0 == d)
                .map(|c| (&rows[v * per_value + c], &trials[c]))
                .collect();
            if picked.is_empty() {
                continue;
            }
            let count = picked.len() as f64;
            let mean_iters = picked.iter().map(|(r, _)| r.iterations as f64).sum::<f64>() / count;
            let mut line = format!("value={value} dim={dim} mean_iterations={mean_iters:.1}");
            if !args.no_timing {
                let mut walls: Vec<f64> = picked.iter().map(|(r, _)| r.wall_ns as f64).collect();
                line += &format!(" median_wall_ns={:.0}", median(&mut walls));
            }
            let ratios: Vec<f64> = picked
                .iter()
                .filter_map(|(r, t)| t.oracle.filter(|&o| o > 0.0).map(|o| (r.distance - o) / o))
                .collect();
            if !ratios.is_empty() {
                let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
                line += &format!(" mean_relative_distance_error={mean:.6}");
            }
            println!("{line}");
        }
    }
    Ok(if rows.iter().all(|r| r.converged) {
        Status::Success
    } else {
        Status::NotConverged
    })
}
