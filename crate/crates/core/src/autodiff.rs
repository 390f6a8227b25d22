//! Path derivatives of the repaired point with respect to `y0`.
//!
//! With the sampled index sets `ω = (S_0, …, S_{K-1})` held fixed, the solver
//! output is a piecewise affine function of `y0`. Away from ties and
//! activation boundaries its Jacobian follows from the chain rule:
//!
//! ```text
//! dz_proj/dy0 = I - C†C =: P          db_new/dy0 = -A P
//! dw_{k+1}   = (I - δ s a aᵀ/‖a‖²) dw_k + (δ s/‖a‖²) a · db_new[i*]
//! J          = P + N dw_K
//! ```
//!
//! where `a` is the selected row of `A N` and `s ∈ {0, 1}` says whether the
//! step moved. Only the basic variant is covered. At `r = 0` the inactive
//! branch is taken.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{validate, ConstraintSystem, SolveResult};
use crate::nullspace::{self, NullspaceFactorization};
use crate::pipeline::{self, solve_transformed};
use crate::skm::{project_step, PathStep, RowSystem, SkmConfig, Variant};

/// Jacobian `dz*/dy0` along one recorded sampling path.
#[derive(Debug, Clone)]
pub struct PathJacobian {
    /// `n × n`.
    pub jacobian: DMatrix<f64>,
    pub path: Vec<PathStep>,
    /// Largest per-step growth `δ ‖db_new[i*]/dy0‖ / ‖a_i*‖` over active steps.
    pub step_bound: f64,
    /// Frobenius norm of `dw_k/dy0` after each step.
    pub sensitivity_norms: Vec<f64>,
    /// Steps sitting on a tie or exactly on an activation boundary.
    pub nondifferentiable_steps: usize,
    /// Steps whose selected row tied with another violated row.
    pub active_ties: usize,
}

impl PathJacobian {
    pub fn steps(&self) -> usize {
        self.path.len()
    }

    /// `1 + K · step_bound`, an upper bound on `‖J‖₂`.
    pub fn norm_bound(&self) -> f64 {
        1.0 + self.steps() as f64 * self.step_bound
    }

    pub fn is_differentiable(&self) -> bool {
        self.nondifferentiable_steps == 0
    }
}

/// Jacobian of one projection step with respect to the iterate.
pub fn step_jacobian(a: &DVector<f64>, delta: f64, active: bool) -> Result<DMatrix<f64>> {
    let m = a.len();
    let norm_sq = a.norm_squared();
    if !(norm_sq > 0.0) {
        return Err(Error::ZeroRow);
    }
    let mut j = DMatrix::identity(m, m);
    if active {
        j.ger(-delta / norm_sq, a, a, 1.0);
    }
    Ok(j)
}

fn basic_only(config: &SkmConfig) -> Result<()> {
    match config.variant {
        Variant::Basic => Ok(()),
        _ => Err(Error::UnsupportedVariant),
    }
}

/// Solves `system` and differentiates the result along the realized path.
pub fn path_jacobian(
    system: &ConstraintSystem,
    config: &SkmConfig,
) -> Result<(SolveResult, PathJacobian)> {
    basic_only(config)?;
    let violations = validate(system);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let factorization = NullspaceFactorization::new(&system.c);
    let t = nullspace::transform_with(system, &factorization)?;
    let (result, outcome) = solve_transformed(system, &t, config, true)?;
    let path = outcome.path.unwrap_or_default();

    let n = system.dim();
    let m = t.reduced_dim();
    let projector = factorization.null_projector();
    let db_new = -(&system.a * &projector);
    let rows = RowSystem::new(&t.a_new, &t.b_new)?;

    let mut dw = DMatrix::<f64>::zeros(m, n);
    let mut step_bound = 0.0_f64;
    let mut sensitivity_norms = Vec::with_capacity(path.len());
    let mut nondifferentiable_steps = 0;
    let mut active_ties = 0;
    for step in &path {
        nondifferentiable_steps += usize::from(step.record.nondifferentiable());
        active_ties += usize::from(step.record.active_tie());
        if let (true, Some(sel)) = (step.record.active, step.record.selection) {
            let i = sel.index;
            let a = DVector::from_column_slice(rows.row(i));
            let scale = config.delta / rows.norm_sq(i);
            let db_i = db_new.row(i).transpose();
            // dw ← dw - scale·a·(aᵀdw) + scale·a·db_iᵀ
            let correction = db_i - dw.transpose() * &a;
            dw.ger(scale, &a, &correction, 1.0);
            step_bound = step_bound.max(config.delta * db_i_norm(&db_new, i) / rows.norm_sq(i).sqrt());
        }
        sensitivity_norms.push(dw.norm());
    }

    let jacobian = projector + &t.basis * &dw;
    Ok((
        result,
        PathJacobian {
            jacobian,
            path,
            step_bound,
            sensitivity_norms,
            nondifferentiable_steps,
            active_ties,
        },
    ))
}

fn db_i_norm(db: &DMatrix<f64>, i: usize) -> f64 {
    db.row(i).norm()
}

/// Output of [`replay_path`].
#[derive(Debug, Clone)]
pub struct Replay {
    pub z: DVector<f64>,
    /// Per step, the row that moved the iterate by more than rounding.
    ///
    /// A step whose residual is zero up to rounding (typically a row
    /// re-selected right after an exact projection onto it) shows as `None`
    /// whichever way rounding tipped it; its derivative is the same on both sides.
    pub selections: Vec<Option<usize>>,
}

/// Residuals at or below this multiple of the row's scale are rounding noise.
const ROUNDING_FLOOR: f64 = 1e-12;

/// Re-runs the recorded sampled sets from a (possibly perturbed) `y0`,
/// reselecting rows at each step and without any termination checks.
pub fn replay_path(
    system: &ConstraintSystem,
    y0: &DVector<f64>,
    path: &[PathStep],
    config: &SkmConfig,
) -> Result<Replay> {
    let mut moved = system.clone();
    moved.y0 = Some(y0.clone());
    let t = nullspace::transform(&moved)?;
    let rows = RowSystem::new(&t.a_new, &t.b_new)?;
    let mut w = config
        .w0
        .clone()
        .unwrap_or_else(|| DVector::zeros(t.reduced_dim()));
    let mut selections = Vec::with_capacity(path.len());
    for step in path {
        let scale = w.amax().max(1.0);
        let rec = project_step(&rows, w.as_mut_slice(), &step.sample, config.delta);
        selections.push(rec.selection.and_then(|s| {
            let floor = ROUNDING_FLOOR * scale.max(rows.rhs()[s.index].abs()) * rows.norm_sq(s.index).sqrt();
            (s.residual > floor).then_some(s.index)
        }));
    }
    Ok(Replay {
        z: nullspace::recover(&t, &w)?,
        selections,
    })
}

/// Per-path comparison of the analytic Jacobian with central differences.
#[derive(Debug, Clone)]
pub struct FdCheck {
    /// `max_j ‖J e_j - fd_j‖_∞ / max(1, ‖fd_j‖_∞)`.
    pub max_rel_error: f64,
    pub nondifferentiable_steps: usize,
    pub active_ties: usize,
    /// Some perturbed replay moved the iterate along different rows.
    pub boundary_crossed: bool,
}

impl FdCheck {
    /// Paths with a tie between violated rows, or whose selections change
    /// within `eps`, are not comparable.
    pub fn excluded(&self) -> bool {
        self.active_ties > 0 || self.boundary_crossed
    }
}

/// Central differences of the fixed-path map `y0 ↦ z*` along every coordinate.
pub fn finite_difference_check(
    system: &ConstraintSystem,
    config: &SkmConfig,
    eps: f64,
) -> Result<(SolveResult, PathJacobian, FdCheck)> {
    if !(eps > 0.0) {
        return Err(Error::Config("eps must be positive".into()));
    }
    let (result, pj) = path_jacobian(system, config)?;
    let y0 = system.start();
    let base = replay_path(system, &y0, &pj.path, config)?;
    debug_assert_eq!(base.z, result.z_star);

    let n = y0.len();
    let mut max_rel_error = 0.0_f64;
    let mut boundary_crossed = false;
    for j in 0..n {
        let mut plus = y0.clone();
        plus[j] += eps;
        let mut minus = y0.clone();
        minus[j] -= eps;
        let rp = replay_path(system, &plus, &pj.path, config)?;
        let rm = replay_path(system, &minus, &pj.path, config)?;
        if rp.selections != base.selections || rm.selections != base.selections {
            boundary_crossed = true;
        }
        let fd = (rp.z - rm.z) / (2.0 * eps);
        let err = (pj.jacobian.column(j) - &fd).amax() / fd.amax().max(1.0);
        max_rel_error = max_rel_error.max(err);
    }
    let check = FdCheck {
        max_rel_error,
        nondifferentiable_steps: pj.nondifferentiable_steps,
        active_ties: pj.active_ties,
        boundary_crossed,
    };
    Ok((result, pj, check))
}

/// Seed-averaged analytic directional derivative against the finite
/// difference of the seed-averaged solver output.
#[derive(Debug, Clone)]
pub struct GradientReport {
    /// Mean over paths of `J_ω · probe`.
    pub analytic_mean: DVector<f64>,
    /// `(E_ω z*(y0 + ε·probe) - E_ω z*(y0 - ε·probe)) / 2ε` with a shared seed set.
    pub fd_of_mean: DVector<f64>,
    pub analytic_sem: DVector<f64>,
    pub fd_sem: DVector<f64>,
    /// Per-component sample variance of `J_ω · probe`.
    pub analytic_variance: DVector<f64>,
    pub paths: usize,
    /// Paths whose run contained a nondifferentiable step.
    pub flagged_paths: usize,
    pub eps: f64,
}

impl GradientReport {
    /// Allowed gap per component: three combined standard errors plus `10·eps`.
    pub fn tolerance(&self) -> DVector<f64> {
        self.analytic_sem.zip_map(&self.fd_sem, |a, f| {
            3.0 * (a * a + f * f).sqrt() + 10.0 * self.eps
        })
    }

    pub fn max_gap(&self) -> f64 {
        (&self.analytic_mean - &self.fd_of_mean).amax()
    }

    pub fn passes(&self) -> bool {
        let tol = self.tolerance();
        (&self.analytic_mean - &self.fd_of_mean)
            .iter()
            .zip(tol.iter())
            .all(|(g, t)| g.abs() <= *t)
    }
}

/// Seed used for path `i` of a gradient check.
pub fn path_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

/// Monte Carlo check that the path derivative is unbiased for the derivative
/// of the expected output.
///
/// Every path runs exactly `config.max_iters` steps (early stopping is
/// switched off) so that each seed defines the same map `y0 ↦ W_K(y0, ω)`
/// at all three evaluation points.
pub fn expected_gradient_check(
    system: &ConstraintSystem,
    config: &SkmConfig,
    num_paths: usize,
    probe: &DVector<f64>,
    eps: f64,
) -> Result<GradientReport> {
    basic_only(config)?;
    if num_paths < 50 {
        return Err(Error::Config(format!(
            "num_paths must be at least 50, got {num_paths}"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Config("eps must be positive".into()));
    }
    let n = system.dim();
    if probe.len() != n {
        return Err(Error::Dimension(format!(
            "probe has length {}, expected {n}",
            probe.len()
        )));
    }
    let y0 = system.start();
    let shifted = |sign: f64| {
        let mut s = system.clone();
        s.y0 = Some(&y0 + probe * (sign * eps));
        s
    };
    let (plus, minus) = (shifted(1.0), shifted(-1.0));

    let per_path: Vec<Result<(DVector<f64>, DVector<f64>, bool)>> = (0..num_paths)
        .into_par_iter()
        .map(|i| {
            let cfg = SkmConfig {
                seed: path_seed(config.seed, i),
                check_every: 0,
                ..config.clone()
            };
            let (_, pj) = path_jacobian(system, &cfg)?;
            let analytic = &pj.jacobian * probe;
            let zp = pipeline::tskm_solve(&plus, &cfg)?.z_star;
            let zm = pipeline::tskm_solve(&minus, &cfg)?.z_star;
            Ok((analytic, (zp - zm) / (2.0 * eps), !pj.is_differentiable()))
        })
        .collect();

    let mut analytic = Vec::with_capacity(num_paths);
    let mut fd = Vec::with_capacity(num_paths);
    let mut flagged_paths = 0;
    for r in per_path {
        let (a, f, flagged) = r?;
        analytic.push(a);
        fd.push(f);
        flagged_paths += usize::from(flagged);
    }
    let (analytic_mean, analytic_variance) = mean_and_variance(&analytic);
    let (fd_of_mean, fd_variance) = mean_and_variance(&fd);
    let count = num_paths as f64;
    Ok(GradientReport {
        analytic_sem: analytic_variance.map(|v| (v / count).sqrt()),
        fd_sem: fd_variance.map(|v| (v / count).sqrt()),
        analytic_mean,
        fd_of_mean,
        analytic_variance,
        paths: num_paths,
        flagged_paths,
        eps,
    })
}

fn mean_and_variance(samples: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let k = samples.len() as f64;
    let n = samples[0].len();
    let mean = samples
        .iter()
        .fold(DVector::zeros(n), |acc, s| acc + s)
        / k;
    let var = samples.iter().fold(DVector::zeros(n), |acc, s| {
        let d = s - &mean;
        acc + d.component_mul(&d)
    }) / (k - 1.0).max(1.0);
    (mean, var)
}
