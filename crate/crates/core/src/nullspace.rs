//! Elimination of equality constraints through an SVD null-space basis.
//!
//! Every solution of `C z = d` is written as `z = z_proj + N w`, where the
//! columns of `N` are an orthonormal basis of `null(C)` and `z_proj` is the
//! minimum-norm correction of `y0` onto the affine set. The inequalities then
//! become `(A N) w <= b - A z_proj`, a pure inequality system in `w`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ConstraintSystem, ZERO_ROW_RTOL};

/// Relative tolerance on `‖C z_proj - d‖_∞` before the equalities are declared inconsistent.
pub const CONSISTENCY_RTOL: f64 = 1e-8;

/// Tolerance used when a fully pinned point is checked against the inequalities.
pub const PINNED_FEASIBILITY_RTOL: f64 = 1e-8;

/// SVD of an equality matrix `C`, reusable across solves that share `C`.
#[derive(Debug, Clone)]
pub struct NullspaceFactorization {
    n: usize,
    q: usize,
    rank: usize,
    /// `n × (n - rank)`, orthonormal columns spanning `null(C)`.
    basis: DMatrix<f64>,
    /// `n × q` Moore-Penrose pseudoinverse built from the same SVD.
    pinv: DMatrix<f64>,
}

impl NullspaceFactorization {
    /// Factorizes a `q × n` matrix with a full SVD.
    ///
    /// Singular values at or below `max(q, n) · ε · σ_max` are treated as zero.
    /// Right singular vectors beyond `min(q, n)` always belong to the null space.
    pub fn new(c: &DMatrix<f64>) -> Self {
        let (q, n) = c.shape();
        if q == 0 || n == 0 {
            return Self {
                n,
                q,
                rank: 0,
                basis: DMatrix::identity(n, n),
                pinv: DMatrix::zeros(n, q),
            };
        }

        let svd = faer::Mat::from_fn(q, n, |i, j| c[(i, j)])
            .svd()
            .expect("SVD of a finite matrix converges");
        let (u, v) = (svd.U(), svd.V());
        let sigma: Vec<f64> = svd.S().column_vector().iter().copied().collect();

        let sigma_max = sigma.iter().copied().fold(0.0_f64, f64::max);
        let tau = q.max(n) as f64 * f64::EPSILON * sigma_max;
        let range: Vec<usize> = (0..sigma.len()).filter(|&k| sigma[k] > tau).collect();
        let null: Vec<usize> = (0..n)
            .filter(|&k| k >= sigma.len() || sigma[k] <= tau)
            .collect();

        let basis = DMatrix::from_fn(n, null.len(), |i, col| v[(i, null[col])]);
        // C† = Σ_k v_k u_kᵀ / σ_k over the retained singular triplets.
        let pinv = DMatrix::from_fn(n, q, |i, j| {
            range.iter().map(|&k| v[(i, k)] * u[(j, k)] / sigma[k]).sum()
        });

        Self {
            n,
            q,
            rank: range.len(),
            basis,
            pinv,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Null-space basis `N`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Pseudoinverse `C†`.
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// Orthogonal projector `I - C†C = N Nᵀ` onto `null(C)`.
    pub fn null_projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// A mixed system rewritten as a pure inequality system in null-space coordinates.
#[derive(Debug, Clone)]
pub struct TransformedSystem {
    /// `n × m` orthonormal null-space basis.
    pub basis: DMatrix<f64>,
    pub z_proj: DVector<f64>,
    /// `A N`, `p × m`.
    pub a_new: DMatrix<f64>,
    /// `b - A z_proj`.
    pub b_new: DVector<f64>,
    pub rank_c: usize,
}

impl TransformedSystem {
    /// Dimension `m` of the reduced space.
    pub fn reduced_dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Transforms `system` around its `y0` (the origin when absent).
pub fn transform(system: &ConstraintSystem) -> Result<TransformedSystem> {
    let factorization = NullspaceFactorization::new(&system.c);
    transform_with(system, &factorization)
}

/// Same as [`transform`] but reuses a precomputed factorization of `system.c`.
pub fn transform_with(
    system: &ConstraintSystem,
    factorization: &NullspaceFactorization,
) -> Result<TransformedSystem> {
    let n = system.dim();
    if factorization.n != n || factorization.q != system.num_equalities() {
        return Err(Error::Dimension(format!(
            "factorization is for a {}x{} matrix, system has C of shape {}x{}",
            factorization.q,
            factorization.n,
            system.num_equalities(),
            n
        )));
    }
    let y0 = system.start();

    let z_proj = if system.num_equalities() == 0 {
        y0
    } else {
        let residual = &system.c * &y0 - &system.d;
        let z = &y0 - &factorization.pinv * residual;
        let eq_residual = (&system.c * &z - &system.d).amax();
        let threshold = CONSISTENCY_RTOL * system.d.amax().max(1.0);
        if !(eq_residual <= threshold) {
            return Err(Error::InconsistentEqualities {
                residual: eq_residual,
                threshold,
            });
        }
        z
    };

    let basis = factorization.basis.clone();
    let a_new = &system.a * &basis;
    let b_new = &system.b - &system.a * &z_proj;

    // Rows of A N that vanish cannot be moved by any w; they must already hold.
    let zero_row = ZERO_ROW_RTOL * system.a.amax().max(1.0);
    let pinned_tol = PINNED_FEASIBILITY_RTOL * system.b.amax().max(1.0);
    for i in 0..a_new.nrows() {
        if a_new.row(i).norm() < zero_row && b_new[i] < -pinned_tol {
            return Err(Error::InfeasibleFullRank {
                row: i,
                violation: -b_new[i],
            });
        }
    }

    Ok(TransformedSystem {
        basis,
        z_proj,
        a_new,
        b_new,
        rank_c: factorization.rank,
    })
}

/// Maps reduced coordinates back: `z = z_proj + N w`.
pub fn recover(t: &TransformedSystem, w: &DVector<f64>) -> Result<DVector<f64>> {
    if w.len() != t.reduced_dim() {
        return Err(Error::Dimension(format!(
            "w has length {}, reduced dimension is {}",
            w.len(),
            t.reduced_dim()
        )));
    }
    Ok(&t.z_proj + &t.basis * w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_system(y0: [f64; 2]) -> ConstraintSystem {
        ConstraintSystem::new(
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            Some(DVector::from_row_slice(&y0)),
        )
        .unwrap()
    }

    #[test]
    fn projects_origin_onto_line() {
        let t = transform(&line_system([0.0, 0.0])).unwrap();
        assert!((t.z_proj[0] - 0.5).abs() < 1e-14);
        assert!((t.z_proj[1] - 0.5).abs() < 1e-14);
        assert_eq!(t.rank_c, 1);
        assert_eq!(t.reduced_dim(), 1);
        // N spans ±(1, -1)/√2.
        let n = t.basis.column(0);
        assert!((n[0] + n[1]).abs() < 1e-14);
        assert!((n.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn recover_traces_the_line() {
        let s = line_system([3.0, -1.0]);
        let t = transform(&s).unwrap();
        for k in -5..=5 {
            let w = DVector::from_element(1, k as f64 * 0.7);
            let z = recover(&t, &w).unwrap();
            assert!((z[0] + z[1] - 1.0).abs() < 1e-12);
        }
        let z0 = recover(&t, &DVector::zeros(1)).unwrap();
        assert_eq!(z0, t.z_proj);
    }

    #[test]
    fn no_equalities_is_identity_transform() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let y0 = DVector::from_vec(vec![0.3, -4.0]);
        let s = ConstraintSystem::inequalities(a.clone(), b.clone())
            .unwrap()
            .with_y0(y0.clone());
        let t = transform(&s).unwrap();
        assert_eq!(t.basis, DMatrix::identity(2, 2));
        assert_eq!(t.z_proj, y0);
        assert_eq!(t.a_new, a);
        assert_eq!(t.b_new, &b - &a * &y0);
    }

    #[test]
    fn square_full_rank_pins_point() {
        let s = ConstraintSystem::new(
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 2.0]),
            Some(DVector::from_vec(vec![-7.0, 9.0])),
        )
        .unwrap();
        let t = transform(&s).unwrap();
        assert_eq!(t.reduced_dim(), 0);
        assert!((t.z_proj[0] - 1.0).abs() < 1e-14 && (t.z_proj[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn pinned_point_violating_inequality_is_error() {
        let s = ConstraintSystem::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_vec(vec![0.0]),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 2.0]),
            None,
        )
        .unwrap();
        assert!(matches!(
            transform(&s),
            Err(Error::InfeasibleFullRank { row: 0, .. })
        ));
    }

    #[test]
    fn inconsistent_equalities_are_rejected() {
        // x + y = 1 and 2x + 2y = 3 cannot both hold.
        let s = ConstraintSystem::new(
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DVector::from_vec(vec![1.0, 3.0]),
            None,
        )
        .unwrap();
        assert!(matches!(
            transform(&s),
            Err(Error::InconsistentEqualities { .. })
        ));
    }

    #[test]
    fn redundant_equalities_are_fine() {
        let s = ConstraintSystem::new(
            DMatrix::zeros(0, 3),
            DVector::zeros(0),
            DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]),
            DVector::from_vec(vec![1.0, 2.0]),
            None,
        )
        .unwrap();
        let t = transform(&s).unwrap();
        assert_eq!(t.rank_c, 1);
        assert_eq!(t.reduced_dim(), 2);
    }

    #[test]
    fn recover_rejects_wrong_length() {
        let t = transform(&line_system([0.0, 0.0])).unwrap();
        assert!(matches!(
            recover(&t, &DVector::zeros(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn precomputed_factorization_matches_fresh_transform() {
        let s = line_system([2.0, 5.0]);
        let f = NullspaceFactorization::new(&s.c);
        let a = transform_with(&s, &f).unwrap();
        let b = transform(&s).unwrap();
        assert_eq!(a.z_proj, b.z_proj);
        assert_eq!(a.basis, b.basis);

        let wrong = NullspaceFactorization::new(&DMatrix::identity(3, 3));
        assert!(matches!(transform_with(&s, &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn pseudoinverse_satisfies_penrose_identity() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let f = NullspaceFactorization::new(&c);
        let cpc = &c * f.pinv() * &c;
        assert!((cpc - &c).amax() < 1e-12);
        let projector = DMatrix::identity(3, 3) - f.pinv() * &c;
        assert!((projector - f.null_projector()).amax() < 1e-12);
    }
}
