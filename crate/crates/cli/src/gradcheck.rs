use std::path::PathBuf;

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use skm_core::autodiff::{path_seed, FdCheck};
use skm_core::skm::DEFAULT_DELTA;
use skm_core::{
    expected_gradient_check, finite_difference_check, load_system, Beta, DVector, Sampling,
    SkmConfig,
};

use crate::common::{csv_writer, thread_pool, Status};

/// Largest accepted per-path gap between the analytic Jacobian and central differences.
pub const PATH_RTOL: f64 = 1e-5;

/// Check path derivatives against finite differences.
#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 200)]
    paths: usize,
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value = "auto")]
    beta: Beta,
    #[arg(long, default_value = "with")]
    sampling: Sampling,
    /// Step budget; the expectation check always runs exactly this many steps.
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Per-path CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<Status> {
    if !(args.eps > 0.0) {
        bail!("eps must be positive, got {}", args.eps);
    }
    let config = SkmConfig {
        delta: args.delta,
        beta: args.beta,
        sampling: args.sampling,
        max_iters: args.max_iters,
        seed: args.seed,
        ..Default::default()
    };
    config.validate()?;
    let system = load_system(&args.input)?;
    let pool = thread_pool()?;

    let checks: Vec<FdCheck> = pool.install(|| {
        (0..args.paths)
            .into_par_iter()
            .map(|i| {
                let cfg = SkmConfig {
                    seed: path_seed(args.seed, i),
                    ..config.clone()
                };
                Ok(finite_difference_check(&system, &cfg, args.eps)?.2)
            })
            .collect::<Result<_>>()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut probe = DVector::from_fn(system.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    probe /= probe.norm().max(f64::MIN_POSITIVE);
    let report = pool.install(|| expected_gradient_check(&system, &config, args.paths, &probe, args.eps))?;

    if let Some(path) = &args.csv {
        let mut out = csv_writer(
            path,
            &["path", "seed", "max_rel_error", "nondifferentiable_steps", "active_ties", "excluded"],
        )?;
        for (i, c) in checks.iter().enumerate() {
            out.write_record([
                i.to_string(),
                path_seed(args.seed, i).to_string(),
                c.max_rel_error.to_string(),
                c.nondifferentiable_steps.to_string(),
                c.active_ties.to_string(),
                c.excluded().to_string(),
            ])?;
        }
        out.flush()?;
    }

    let excluded = checks.iter().filter(|c| c.excluded()).count();
    let flagged = checks.iter().filter(|c| c.nondifferentiable_steps > 0).count();
    let worst = checks
        .iter()
        .filter(|c| !c.excluded())
        .map(|c| c.max_rel_error)
        .fold(0.0_f64, f64::max);
    let per_path_ok = worst <= PATH_RTOL;
    let expectation_ok = report.passes();

    println!("paths: {}", args.paths);
    println!("compared: {}", args.paths - excluded);
    println!("excluded: {excluded}");
    println!("flagged: {flagged}");
    println!("max_rel_error: {worst:e}");
    println!("expectation_gap: {:e}", report.max_gap());
    println!("expectation_tolerance: {:e}", report.tolerance().min());
    println!("per_path: {}", if per_path_ok { "pass" } else { "fail" });
    println!("expectation: {}", if expectation_ok { "pass" } else { "fail" });
    Ok(if per_path_ok && expectation_ok {
        Status::Success
    } else {
        Status::CheckFailed
    })
}
