//! Seeded random instances for tests, sweeps and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ConstraintSystem;
use crate::nullspace::NullspaceFactorization;

/// Default size of the initial maximum violation.
pub const DEFAULT_VIOLATION_SCALE: f64 = 100.0;

/// A generated system plus a point known to satisfy it with slack.
#[derive(Debug, Clone)]
pub struct FeasibleInstance {
    pub system: ConstraintSystem,
    pub witness: DVector<f64>,
}

fn gaussian_unit_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    m
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random `A z <= b`, `C z = d` with unit-norm Gaussian rows around a Gaussian witness.
///
/// `d = C z_w` and `b = A z_w + s` with `s_i = margin + |g_i|`, `g_i` standard
/// normal, so the witness is strictly interior whenever `margin > 0`.
pub fn gen_feasible_mixed(
    n: usize,
    p: usize,
    q: usize,
    seed: u64,
    margin: f64,
) -> Result<FeasibleInstance> {
    if n == 0 || q >= n {
        return Err(Error::Dimension(format!(
            "need 0 <= q < n, got n = {n}, q = {q}"
        )));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Config(format!("margin must be non-negative, got {margin}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let witness = gaussian_vector(&mut rng, n);
    let a = gaussian_unit_rows(&mut rng, p, n);
    let c = gaussian_unit_rows(&mut rng, q, n);
    let slack = DVector::from_fn(p, |_, _| margin + rng.sample::<f64, _>(StandardNormal).abs());
    let b = &a * &witness + slack;
    let d = &c * &witness;
    let system = ConstraintSystem::new(a, b, c, d, None)?;
    Ok(FeasibleInstance { system, witness })
}

/// Start point whose maximum violation (inequality or equality) equals
/// `violation_scale`, found along a random ray from the witness.
///
/// The violation along the ray is convex and zero at the witness, hence
/// non-decreasing, so bisection on the ray parameter is exact.
pub fn gen_infeasible_start(
    instance: &FeasibleInstance,
    seed: u64,
    violation_scale: f64,
) -> DVector<f64> {
    let system = &instance.system;
    let w = &instance.witness;
    if violation_scale <= 0.0
        || system.num_inequalities() + system.num_equalities() == 0
    {
        return w.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let along = |u: &DVector<f64>, t: f64| system.max_violation(&(w + u * t));

    for _ in 0..64 {
        let mut u = gaussian_vector(&mut rng, w.len());
        u /= u.norm();
        let mut hi = 1.0;
        while along(&u, hi) < violation_scale && hi < 1e12 {
            hi *= 2.0;
        }
        if along(&u, hi) < violation_scale {
            continue;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if along(&u, mid) < violation_scale {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        return w + u * hi;
    }
    // every ray stayed feasible, which happens only without effective constraints
    w.clone()
}

/// A feasible mixed system with `y0` set at the given violation scale.
pub fn gen_repair_problem(
    n: usize,
    p: usize,
    q: usize,
    seed: u64,
    violation_scale: f64,
) -> Result<FeasibleInstance> {
    let mut inst = gen_feasible_mixed(n, p, q, seed, 0.0)?;
    let y0 = gen_infeasible_start(&inst, seed.wrapping_add(0x9E37_79B9_7F4A_7C15), violation_scale);
    inst.system.y0 = Some(y0);
    Ok(inst)
}

/// Parametric QP family `min ½ yᵀQy + pᵀy` s.t. `A y = x`, `G y <= h`.
///
/// `h_i = Σ_j |(G A†)_ij|`, so `y = A† x` is feasible for every `‖x‖_∞ <= 1`.
#[derive(Debug, Clone)]
pub struct QpFamily {
    pub q: DMatrix<f64>,
    pub p: DVector<f64>,
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

pub fn gen_qp_family(n_var: usize, n_eq: usize, n_ineq: usize, seed: u64) -> Result<QpFamily> {
    if n_var == 0 || n_eq >= n_var {
        return Err(Error::Dimension(format!(
            "need 0 <= n_eq < n_var, got n_var = {n_var}, n_eq = {n_eq}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = DMatrix::from_fn(n_var, n_var, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = factor.transpose() * &factor / n_var as f64 + DMatrix::identity(n_var, n_var);
    let p = DVector::from_fn(n_var, |_, _| rng.random::<f64>());
    let a = DMatrix::from_fn(n_eq, n_var, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g = DMatrix::from_fn(n_ineq, n_var, |_, _| rng.sample::<f64, _>(StandardNormal));
    let ga = &g * NullspaceFactorization::new(&a).pinv();
    let h = DVector::from_fn(n_ineq, |i, _| ga.row(i).iter().map(|x| x.abs()).sum());
    Ok(QpFamily { q, p, a, g, h })
}

impl QpFamily {
    pub fn n_var(&self) -> usize {
        self.q.nrows()
    }

    /// Input `x` uniform on `[-1, 1]^n_eq`.
    pub fn sample_input(&self, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(self.a.nrows(), |_, _| rng.random_range(-1.0..=1.0))
    }

    /// `{G y <= h, A y = x}`.
    pub fn constraint_system(&self, x: &DVector<f64>) -> Result<ConstraintSystem> {
        ConstraintSystem::new(
            self.g.clone(),
            self.h.clone(),
            self.a.clone(),
            x.clone(),
            None,
        )
    }

    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        0.5 * y.dot(&(&self.q * y)) + self.p.dot(y)
    }
}
