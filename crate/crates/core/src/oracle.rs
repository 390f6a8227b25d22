//! Exact Euclidean projection onto `{A z <= b, C z = d}` for small systems.
//!
//! [`project_exact`] enumerates every candidate active set, solves the
//! equality-constrained projection for each, and keeps the primal- and
//! dual-feasible one. It is exhaustive and therefore limited to
//! `n, p <= 16`. [`project_active_set`] reaches the same KKT point with a
//! primal active-set method from a known feasible point and has no size cap.
//! Both return a certificate whose KKT conditions can be rechecked with
//! [`ProjectionCertificate::verify`].
//!
//! Neither routine touches the SVD machinery in [`crate::nullspace`]; the
//! affine subproblems are solved with Gram-Schmidt on the constraint rows.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::ConstraintSystem;

pub const MAX_ORACLE_DIM: usize = 16;
pub const MAX_ORACLE_ROWS: usize = 16;
/// Primal feasibility, relative to `max(1, ‖b‖_∞, ‖d‖_∞)`.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Lower bound on inequality multipliers, relative to `max(1, ‖λ‖_∞)`.
pub const DUAL_TOL: f64 = 1e-9;
/// Stationarity residual, relative to `max(1, ‖y0‖_∞)`.
pub const STATIONARITY_TOL: f64 = 1e-8;
/// A row is dependent when Gram-Schmidt leaves less than this fraction of its norm.
const DEPENDENCE_RTOL: f64 = 1e-10;

/// Exact projection together with the data that certifies it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCertificate {
    pub point: DVector<f64>,
    /// Sorted indices of the inequalities treated as active.
    pub active_set: Vec<usize>,
    /// Multipliers of `active_set`, in the same order.
    pub multipliers: Vec<f64>,
    /// One multiplier per equality row (zero for rows dropped as redundant).
    pub equality_multipliers: DVector<f64>,
    /// `‖(point - y0) + A_Wᵀλ + Cᵀν‖_∞`.
    pub kkt_residual: f64,
}

impl ProjectionCertificate {
    pub fn distance(&self, y0: &DVector<f64>) -> f64 {
        (&self.point - y0).norm()
    }

    /// Rechecks feasibility, dual feasibility and stationarity.
    pub fn verify(&self, system: &ConstraintSystem, y0: &DVector<f64>) -> bool {
        let feas = FEASIBILITY_TOL * feasibility_scale(system);
        let lam_scale = self
            .multipliers
            .iter()
            .fold(1.0_f64, |acc, l| acc.max(l.abs()));
        system.max_inequality_violation(&self.point) <= feas
            && system.max_equality_violation(&self.point) <= feas
            && self.multipliers.iter().all(|&l| l >= -DUAL_TOL * lam_scale)
            && self.kkt_residual <= STATIONARITY_TOL * y0.amax().max(1.0)
            && stationarity(system, y0, self) == self.kkt_residual
    }
}

fn feasibility_scale(system: &ConstraintSystem) -> f64 {
    system.b.amax().max(system.d.amax()).max(1.0)
}

fn stationarity(system: &ConstraintSystem, y0: &DVector<f64>, cert: &ProjectionCertificate) -> f64 {
    let mut g = &cert.point - y0;
    for (&i, &l) in cert.active_set.iter().zip(&cert.multipliers) {
        g += l * system.a.row(i).transpose();
    }
    g += system.c.transpose() * &cert.equality_multipliers;
    g.amax()
}

/// Orthonormalized rows `Q` with `M = L Q`, `L` lower triangular.
struct RowFactor {
    q: Vec<DVector<f64>>,
    l: Vec<Vec<f64>>,
}

impl RowFactor {
    fn new() -> Self {
        Self {
            q: Vec::new(),
            l: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.q.len()
    }

    /// Appends a row; returns `false` (and leaves `self` unchanged) if it is dependent.
    fn push(&mut self, row: &DVector<f64>) -> bool {
        let norm = row.norm();
        let mut v = row.clone();
        let mut coeffs = vec![0.0; self.q.len()];
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (j, qj) in self.q.iter().enumerate() {
                let c = qj.dot(&v);
                coeffs[j] += c;
                v.axpy(-c, qj, 1.0);
            }
        }
        let r = v.norm();
        if !(r > DEPENDENCE_RTOL * norm) {
            return false;
        }
        coeffs.push(r);
        self.q.push(v / r);
        self.l.push(coeffs);
        true
    }

    fn pop(&mut self) {
        self.q.pop();
        self.l.pop();
    }

    /// Projects `y0` onto `{M z = g}`; returns the point and multipliers `λ` with `Mᵀλ = y0 - z`.
    fn project(&self, y0: &DVector<f64>, g: &[f64]) -> (DVector<f64>, Vec<f64>) {
        let k = self.len();
        // h = L⁻¹ g
        let mut h = vec![0.0; k];
        for i in 0..k {
            let s: f64 = (0..i).map(|j| self.l[i][j] * h[j]).sum();
            h[i] = (g[i] - s) / self.l[i][i];
        }
        // c = Q y0 - h, z = y0 - Qᵀ c
        let c: Vec<f64> = (0..k).map(|i| self.q[i].dot(y0) - h[i]).collect();
        let mut z = y0.clone();
        for i in 0..k {
            z.axpy(-c[i], &self.q[i], 1.0);
        }
        // Lᵀ λ = c
        let mut lam = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| self.l[j][i] * lam[j]).sum();
            lam[i] = (c[i] - s) / self.l[i][i];
        }
        (z, lam)
    }
}

/// Independent subset of the equality rows, factorized.
struct EqualityBlock {
    factor: RowFactor,
    kept: Vec<usize>,
    rhs: Vec<f64>,
}

fn equality_block(system: &ConstraintSystem) -> EqualityBlock {
    let mut factor = RowFactor::new();
    let mut kept = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..system.num_equalities() {
        if factor.push(&system.c.row(i).transpose()) {
            kept.push(i);
            rhs.push(system.d[i]);
        }
    }
    EqualityBlock { factor, kept, rhs }
}

fn certificate(
    system: &ConstraintSystem,
    y0: &DVector<f64>,
    eq: &EqualityBlock,
    active: Vec<usize>,
    point: DVector<f64>,
    lam: &[f64],
) -> ProjectionCertificate {
    let mut nu = DVector::zeros(system.num_equalities());
    for (k, &i) in eq.kept.iter().enumerate() {
        nu[i] = lam[k];
    }
    let mut cert = ProjectionCertificate {
        point,
        active_set: active,
        multipliers: lam[eq.kept.len()..].to_vec(),
        equality_multipliers: nu,
        kkt_residual: 0.0,
    };
    cert.kkt_residual = stationarity(system, y0, &cert);
    cert
}

fn is_primal_feasible(system: &ConstraintSystem, z: &DVector<f64>) -> bool {
    let tol = FEASIBILITY_TOL * feasibility_scale(system);
    system.max_inequality_violation(z) <= tol && system.max_equality_violation(z) <= tol
}

fn is_dual_feasible(lam: &[f64]) -> bool {
    let scale = lam.iter().fold(1.0_f64, |acc, l| acc.max(l.abs()));
    lam.iter().all(|&l| l >= -DUAL_TOL * scale)
}

/// Exact projection of `y0` by exhaustive active-set enumeration.
///
/// Subsets are visited in increasing bitmask order; rank-deficient subsets
/// are skipped since their optimum is also reached through an independent one.
pub fn project_exact(system: &ConstraintSystem, y0: &DVector<f64>) -> Result<ProjectionCertificate> {
    project_exact_ordered(system, y0, false)
}

/// [`project_exact`] visiting subsets in decreasing bitmask order.
pub fn project_exact_reversed(
    system: &ConstraintSystem,
    y0: &DVector<f64>,
) -> Result<ProjectionCertificate> {
    project_exact_ordered(system, y0, true)
}

fn project_exact_ordered(
    system: &ConstraintSystem,
    y0: &DVector<f64>,
    reversed: bool,
) -> Result<ProjectionCertificate> {
    let (n, p) = (system.dim(), system.num_inequalities());
    if n > MAX_ORACLE_DIM || p > MAX_ORACLE_ROWS {
        return Err(Error::BudgetExceeded {
            n,
            p,
            max_dim: MAX_ORACLE_DIM,
            max_rows: MAX_ORACLE_ROWS,
        });
    }
    if y0.len() != n {
        return Err(Error::Dimension(format!("y0 has length {}, expected {n}", y0.len())));
    }

    let mut eq = equality_block(system);
    let free = n.saturating_sub(eq.kept.len());
    let mut best: Option<(f64, ProjectionCertificate)> = None;

    let total = 1u32 << p;
    for step in 0..total {
        let mask = if reversed { total - 1 - step } else { step };
        if mask.count_ones() as usize > free {
            continue;
        }
        let active: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
        let base = eq.factor.len();
        let mut independent = true;
        for &i in &active {
            if !eq.factor.push(&system.a.row(i).transpose()) {
                independent = false;
                break;
            }
        }
        if independent {
            let mut g = eq.rhs.clone();
            g.extend(active.iter().map(|&i| system.b[i]));
            let (z, lam) = eq.factor.project(y0, &g);
            if is_dual_feasible(&lam[eq.kept.len()..]) && is_primal_feasible(system, &z) {
                let dist = (&z - y0).norm();
                if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                    let cert = certificate(system, y0, &eq, active, z, &lam);
                    best = Some((dist, cert));
                }
            }
        }
        while eq.factor.len() > base {
            eq.factor.pop();
        }
    }
    best.map(|(_, c)| c).ok_or(Error::Infeasible)
}

/// `min_{z ∈ F} ‖z - y0‖₂`, via [`project_exact`].
pub fn distance_to_feasible(system: &ConstraintSystem, y0: &DVector<f64>) -> Result<f64> {
    Ok(project_exact(system, y0)?.distance(y0))
}

/// Exact projection by a primal active-set method started at a feasible `start`.
///
/// Used where enumeration is out of budget. Blocking constraints are always
/// independent of the working set, so every subproblem is well posed.
pub fn project_active_set(
    system: &ConstraintSystem,
    y0: &DVector<f64>,
    start: &DVector<f64>,
) -> Result<ProjectionCertificate> {
    let (n, p) = (system.dim(), system.num_inequalities());
    if y0.len() != n || start.len() != n {
        return Err(Error::Dimension(format!(
            "y0/start must have length {n}, got {}/{}",
            y0.len(),
            start.len()
        )));
    }
    if !is_primal_feasible(system, start) {
        return Err(Error::InfeasibleStart(system.max_violation(start)));
    }
    let tol = FEASIBILITY_TOL * feasibility_scale(system);
    let mut eq = equality_block(system);
    let mut z = start.clone();

    let mut working: Vec<usize> = Vec::new();
    for i in 0..p {
        if (system.a.row(i) * &z)[0] - system.b[i] >= -tol && eq.factor.push(&system.a.row(i).transpose()) {
            working.push(i);
        }
    }

    let max_iters = 10 * (n + p) + 100;
    for _ in 0..max_iters {
        let mut g = eq.rhs.clone();
        g.extend(working.iter().map(|&i| system.b[i]));
        let (target, lam) = eq.factor.project(y0, &g);
        let step = &target - &z;
        let scale = z.norm().max(y0.norm()).max(1.0);

        if step.norm() <= 1e-13 * scale {
            let ineq = &lam[eq.kept.len()..];
            let lam_scale = ineq.iter().fold(1.0_f64, |acc, l| acc.max(l.abs()));
            let worst = ineq
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -DUAL_TOL * lam_scale)
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k);
            match worst {
                None => {
                    let mut order: Vec<usize> = (0..working.len()).collect();
                    order.sort_by_key(|&k| working[k]);
                    let active: Vec<usize> = order.iter().map(|&k| working[k]).collect();
                    let mut lam_sorted: Vec<f64> = lam[..eq.kept.len()].to_vec();
                    lam_sorted.extend(order.iter().map(|&k| ineq[k]));
                    return Ok(certificate(system, y0, &eq, active, target, &lam_sorted));
                }
                Some(k) => {
                    working.remove(k);
                    rebuild(&mut eq, system, &working);
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..p {
            if working.contains(&i) {
                continue;
            }
            let row = system.a.row(i);
            let slope = (row * &step)[0];
            if slope > 1e-14 * row.norm() * step.norm() {
                let gap = (system.b[i] - (row * &z)[0]).max(0.0);
                let a_i = gap / slope;
                if a_i < alpha {
                    alpha = a_i;
                    blocking = Some(i);
                }
            }
        }
        z.axpy(alpha, &step, 1.0);
        if let Some(i) = blocking {
            if eq.factor.push(&system.a.row(i).transpose()) {
                working.push(i);
            } else {
                return Err(Error::ActiveSetStalled(max_iters));
            }
        }
    }
    Err(Error::ActiveSetStalled(max_iters))
}

fn rebuild(eq: &mut EqualityBlock, system: &ConstraintSystem, working: &[usize]) {
    while eq.factor.len() > eq.kept.len() {
        eq.factor.pop();
    }
    for &i in working {
        let ok = eq.factor.push(&system.a.row(i).transpose());
        debug_assert!(ok, "a subset of an independent set stays independent");
    }
}
