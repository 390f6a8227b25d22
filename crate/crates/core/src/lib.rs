//! Repair of points that violate mixed linear systems `A z <= b`, `C z = d`.
//!
//! Equalities are removed by moving to coordinates of `null(C)` around the
//! minimum-norm correction of the start point; the remaining inequalities are
//! solved with Sampling Kaczmarz-Motzkin iteration. The crate also carries an
//! exact small-scale projection oracle, random instance generators and path
//! derivatives of the repaired point with respect to the start point.

pub mod autodiff;
pub mod error;
pub mod generators;
pub mod model;
pub mod nullspace;
pub mod oracle;
pub mod pipeline;
pub mod skm;

pub use autodiff::{
    expected_gradient_check, finite_difference_check, path_jacobian, step_jacobian, FdCheck,
    GradientReport, PathJacobian,
};
pub use error::{Error, Result};
pub use model::{
    load_system, save_result, save_system, validate, ConstraintSystem, SolveResult, Termination,
    Violation,
};
pub use nullspace::{recover, transform, NullspaceFactorization, TransformedSystem};
pub use oracle::{distance_to_feasible, project_exact, ProjectionCertificate};
pub use pipeline::{batch_solve, naive_solve, tskm_solve, Method};
pub use skm::{Beta, Sampling, SkmConfig, SkmState, Variant};

pub use nalgebra::{DMatrix, DVector};
