use std::path::PathBuf;

use anyhow::{bail, Result};
use rayon::prelude::*;
use skm_core::generators::{gen_repair_problem, DEFAULT_VIOLATION_SCALE};
use skm_core::skm::{DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use skm_core::{
    naive_solve, tskm_solve, ConstraintSystem, SkmConfig, SolveResult, Termination, Variant,
};

use crate::common::{csv_writer, instance_shape, median, thread_pool, timed, trial_seed, Status};

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Tskm,
    Naive,
    Gskm,
    Nskm,
    Mskm,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Tskm => "tskm",
            Mode::Naive => "naive",
            Mode::Gskm => "gskm",
            Mode::Nskm => "nskm",
            Mode::Mskm => "mskm",
        }
    }

    fn solve(self, system: &ConstraintSystem, base: &SkmConfig) -> skm_core::Result<SolveResult> {
        let variant = match self {
            Mode::Tskm | Mode::Naive => Variant::Basic,
            Mode::Gskm => Variant::gskm(),
            Mode::Nskm => Variant::nskm(),
            Mode::Mskm => Variant::mskm(),
        };
        let config = SkmConfig {
            variant,
            ..base.clone()
        };
        match self {
            Mode::Naive => naive_solve(system, &config),
            _ => tskm_solve(system, &config),
        }
    }
}

/// Compare solver modes on matched instances and seeds.
#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "tskm,naive")]
    modes: Vec<Mode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
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

const HEADER: [&str; 9] = [
    "mode",
    "dim",
    "trial",
    "iterations",
    "wall_time_ns",
    "max_ineq_violation",
    "max_eq_violation",
    "termination",
    "distance_moved",
];

pub fn run(args: Args) -> Result<Status> {
    if args.dims.iter().any(|&n| n == 0) {
        bail!("dims must be positive");
    }
    let base = SkmConfig {
        max_iters: args.max_iters,
        tolerance: args.tol,
        ..Default::default()
    };
    base.validate()?;
    let pool = thread_pool()?;

    let cells: Vec<(usize, usize)> = (0..args.dims.len())
        .flat_map(|d| (0..args.trials).map(move |t| (d, t)))
        .collect();
    let systems: Vec<(ConstraintSystem, u64)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, t)| {
                let n = args.dims[d];
                let (p, q) = instance_shape(n);
                let seed = trial_seed(args.seed, n, t);
                Ok((gen_repair_problem(n, p, q, seed, DEFAULT_VIOLATION_SCALE)?.system, seed))
            })
            .collect::<Result<_>>()
    })?;

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..args.modes.len()).map(move |m| (c, m)))
        .collect();
    let results: Vec<(SolveResult, u128)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, m)| {
                let (system, seed) = &systems[c];
                let config = SkmConfig {
                    seed: *seed,
                    ..base.clone()
                };
                let (r, ns) = timed(|| args.modes[m].solve(system, &config));
                Ok((r?, ns))
            })
            .collect::<Result<_>>()
    })?;

    let mut out = csv_writer(&args.csv, &HEADER)?;
    for (&(c, m), (r, ns)) in jobs.iter().zip(&results) {
        let (d, t) = cells[c];
        out.write_record([
            args.modes[m].name().to_string(),
            args.dims[d].to_string(),
            t.to_string(),
            r.iterations.to_string(),
            if args.no_timing {
                String::new()
            } else {
                ns.to_string()
            },
            r.max_ineq_violation.to_string(),
            r.max_eq_violation.to_string(),
            termination_name(r.termination).to_string(),
            r.distance_moved.to_string(),
        ])?;
    }
    out.flush()?;

    for (d, dim) in args.dims.iter().enumerate() {
        let pick = |m: usize| -> (f64, f64) {
            let mut iters = Vec::new();
            let mut walls = Vec::new();
            for (&(c, mm), (r, ns)) in jobs.iter().zip(&results) {
                if mm == m && cells[c].0 == d {
                    iters.push(r.iterations as f64);
                    walls.push(*ns as f64);
                }
            }
            (median(&mut iters), median(&mut walls))
        };
        let reference = args.modes.iter().position(|&m| m == Mode::Tskm).map(pick);
        for (m, mode) in args.modes.iter().enumerate() {
            let (it, wall) = pick(m);
            let mut line = format!("dim={dim} mode={} median_iterations={it}", mode.name());
            if !args.no_timing {
                line += &format!(" median_wall_ns={wall:.0}");
            }
            if let Some((ref_it, ref_wall)) = reference {
                line += &format!(" iterations_vs_tskm={:.3}", it / ref_it);
                if !args.no_timing {
                    line += &format!(" wall_vs_tskm={:.3}", wall / ref_wall);
                }
            }
            println!("{line}");
        }
    }
    Ok(
        if results
            .iter()
            .all(|(r, _)| r.termination != Termination::IterationCap)
        {
            Status::Success
        } else {
            Status::NotConverged
        },
    )
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::IterationCap => "iteration_cap",
        Termination::AlreadyFeasible => "already_feasible",
    }
}
