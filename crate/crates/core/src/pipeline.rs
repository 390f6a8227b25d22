//! End-to-end repair: null-space transform, SKM in reduced coordinates, recovery.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{validate, ConstraintSystem, SolveResult};
use crate::nullspace::{self, TransformedSystem};
use crate::skm::{self, RowSystem, SkmConfig, SkmOutcome};

fn check_system(system: &ConstraintSystem) -> Result<()> {
    let violations = validate(system);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(violations))
    }
}

/// Repairs `system.y0` (the origin when absent).
///
/// Equalities hold to rounding for every outcome because the iterate only
/// moves inside `null(C)`. Convergence is declared on the inequality
/// violation of the recovered point in the original coordinates.
pub fn tskm_solve(system: &ConstraintSystem, config: &SkmConfig) -> Result<SolveResult> {
    check_system(system)?;
    let t = nullspace::transform(system)?;
    Ok(solve_transformed(system, &t, config, false)?.0)
}

pub(crate) fn solve_transformed(
    system: &ConstraintSystem,
    t: &TransformedSystem,
    config: &SkmConfig,
    record_path: bool,
) -> Result<(SolveResult, SkmOutcome)> {
    let rows = RowSystem::new(&t.a_new, &t.b_new)?;
    let tolerance = config.tolerance;
    let mut monitor = |w: &[f64]| {
        let reduced = rows.max_violation(w);
        if reduced > tolerance {
            return reduced;
        }
        let z = &t.z_proj + &t.basis * DVector::from_column_slice(w);
        system.max_inequality_violation(&z)
    };
    let outcome = skm::run_rows(&rows, config, Some(&mut monitor), record_path)?;
    let z = nullspace::recover(t, &outcome.w)?;
    let result = finish(system, z, outcome.w.clone(), &outcome, config);
    Ok((result, outcome))
}

fn finish(
    system: &ConstraintSystem,
    z_star: DVector<f64>,
    w_final: DVector<f64>,
    outcome: &SkmOutcome,
    config: &SkmConfig,
) -> SolveResult {
    let y0 = system.start();
    SolveResult {
        max_ineq_violation: system.max_inequality_violation(&z_star),
        max_eq_violation: system.max_equality_violation(&z_star),
        distance_moved: (&z_star - &y0).norm(),
        iterations: outcome.iterations,
        termination: outcome.termination,
        residual_trace: config.record_trace.then(|| outcome.trace.clone()),
        z_star,
        w_final,
    }
}

/// Baseline without the null-space transform: each equality becomes a pair
/// of opposing inequalities and SKM runs in the original coordinates from `y0`.
///
/// `config.w0` is ignored; the start is always `y0`.
pub fn naive_solve(system: &ConstraintSystem, config: &SkmConfig) -> Result<SolveResult> {
    check_system(system)?;
    let (stacked, rhs) = stack_equalities(system);
    let rows = RowSystem::new(&stacked, &rhs)?;
    let y0 = system.start();
    let cfg = SkmConfig {
        w0: Some(y0),
        ..config.clone()
    };
    let outcome = skm::run_rows(&rows, &cfg, None, false)?;
    Ok(finish(
        system,
        outcome.w.clone(),
        outcome.w.clone(),
        &outcome,
        config,
    ))
}

/// `[A; C; -C]` and `[b; d; -d]`.
pub fn stack_equalities(system: &ConstraintSystem) -> (DMatrix<f64>, DVector<f64>) {
    let (p, q, n) = (
        system.num_inequalities(),
        system.num_equalities(),
        system.dim(),
    );
    let mut a = DMatrix::zeros(p + 2 * q, n);
    let mut b = DVector::zeros(p + 2 * q);
    if p > 0 {
        a.view_mut((0, 0), (p, n)).copy_from(&system.a);
        b.rows_mut(0, p).copy_from(&system.b);
    }
    if q > 0 {
        a.view_mut((p, 0), (q, n)).copy_from(&system.c);
        a.view_mut((p + q, 0), (q, n)).copy_from(&(-&system.c));
        b.rows_mut(p, q).copy_from(&system.d);
        b.rows_mut(p + q, q).copy_from(&(-&system.d));
    }
    (a, b)
}

/// Solver used by a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    NullSpace,
    Naive,
}

impl Method {
    pub fn solve(self, system: &ConstraintSystem, config: &SkmConfig) -> Result<SolveResult> {
        match self {
            Method::NullSpace => tskm_solve(system, config),
            Method::Naive => naive_solve(system, config),
        }
    }
}

/// Seed used for item `index` of a batch.
pub fn item_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Solves independent systems on up to `workers` threads (`0` = all cores).
///
/// Item `i` runs with seed `config.seed ^ i`, so results do not depend on the
/// worker count. Failures stay in their slot.
pub fn batch_solve(
    systems: &[ConstraintSystem],
    config: &SkmConfig,
    workers: usize,
) -> Vec<Result<SolveResult>> {
    batch_solve_with(Method::NullSpace, systems, config, workers)
}

pub fn batch_solve_with(
    method: Method,
    systems: &[ConstraintSystem],
    config: &SkmConfig,
    workers: usize,
) -> Vec<Result<SolveResult>> {
    let solve_one = |(i, s): (usize, &ConstraintSystem)| {
        let cfg = SkmConfig {
            seed: item_seed(config.seed, i),
            ..config.clone()
        };
        method.solve(s, &cfg)
    };
    if workers == 1 {
        return systems.iter().enumerate().map(solve_one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| systems.par_iter().enumerate().map(solve_one).collect()),
        Err(_) => systems.iter().enumerate().map(solve_one).collect(),
    }
}
