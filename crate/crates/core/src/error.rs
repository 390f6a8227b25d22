use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("constraint system is invalid: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("equality constraints are inconsistent: residual {residual:e} exceeds {threshold:e}")]
    InconsistentEqualities { residual: f64, threshold: f64 },

    #[error("equalities pin the point completely but it violates inequality {row} by {violation:e}")]
    InfeasibleFullRank { row: usize, violation: f64 },

    #[error("no feasible point exists for the constraint system")]
    Infeasible,

    #[error("start point violates the constraints by {0:e}")]
    InfeasibleStart(f64),

    #[error("exact projection limited to n <= {max_dim} and p <= {max_rows}, got n = {n}, p = {p}")]
    BudgetExceeded {
        n: usize,
        p: usize,
        max_dim: usize,
        max_rows: usize,
    },

    #[error("active-set projection did not terminate within {0} iterations")]
    ActiveSetStalled(usize),

    #[error("path derivatives are only available for the basic variant")]
    UnsupportedVariant,

    #[error("inequality row has zero norm")]
    ZeroRow,
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
