//! Constraint systems, solve results and their JSON file formats.
//!
//! A problem file is a JSON object
//!
//! ```json
//! { "A": [[1.0, 0.0]], "b": [0.0], "C": [], "d": [], "y0": [2.0, 0.0] }
//! ```
//!
//! where `A z <= b` are the inequalities, `C z = d` the equalities and `y0`
//! (optional) the point to repair. Matrices are arrays of rows. Floats are
//! written in shortest round-trip form, so a save/load cycle is bit-exact.

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows with a 2-norm below this fraction of `max(1, ‖A‖_max)` count as degenerate.
pub const ZERO_ROW_RTOL: f64 = 1e-12;

/// A mixed linear constraint system `A z <= b`, `C z = d` together with an
/// optional point `y0` that should be moved into the feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
    pub y0: Option<DVector<f64>>,
}

/// One violated invariant of a [`ConstraintSystem`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The named field has the wrong length or column count.
    DimensionMismatch(String),
    /// Inequality row `i` is (numerically) zero.
    ZeroInequalityRow(usize),
    /// Entry `index` (flattened row-major) of the named field is NaN or infinite.
    NonFinite { field: String, index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch(field) => write!(f, "dimension mismatch in \"{field}\""),
            Violation::ZeroInequalityRow(i) => write!(f, "inequality row {i} has zero norm"),
            Violation::NonFinite { field, index } => {
                write!(f, "non-finite entry {index} in \"{field}\"")
            }
        }
    }
}

impl ConstraintSystem {
    /// Builds a system and rejects it if [`validate`] reports anything.
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DMatrix<f64>,
        d: DVector<f64>,
        y0: Option<DVector<f64>>,
    ) -> Result<Self> {
        let system = Self { a, b, c, d, y0 };
        let violations = validate(&system);
        if violations.is_empty() {
            Ok(system)
        } else {
            Err(Error::Validation(violations))
        }
    }

    /// Pure inequality system `A z <= b`.
    pub fn inequalities(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = a.ncols();
        Self::new(a, b, DMatrix::zeros(0, n), DVector::zeros(0), None)
    }

    pub fn with_y0(mut self, y0: DVector<f64>) -> Self {
        self.y0 = Some(y0);
        self
    }

    /// Number of variables.
    pub fn dim(&self) -> usize {
        self.a.ncols().max(self.c.ncols())
    }

    pub fn num_inequalities(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_equalities(&self) -> usize {
        self.c.nrows()
    }

    /// `y0`, or the origin when absent.
    pub fn start(&self) -> DVector<f64> {
        self.y0
            .clone()
            .unwrap_or_else(|| DVector::zeros(self.dim()))
    }

    /// `max(0, max_i (a_i·z - b_i))`.
    pub fn max_inequality_violation(&self, z: &DVector<f64>) -> f64 {
        let r = &self.a * z - &self.b;
        r.iter().fold(0.0_f64, |acc, &v| acc.max(v))
    }

    /// `‖C z - d‖_∞`.
    pub fn max_equality_violation(&self, z: &DVector<f64>) -> f64 {
        let r = &self.c * z - &self.d;
        r.amax()
    }

    /// Largest of the inequality and equality violations.
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        self.max_inequality_violation(z)
            .max(self.max_equality_violation(z))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_system(path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_system(self, path)
    }
}

/// Checks every structural invariant; an empty list means the system is usable.
pub fn validate(system: &ConstraintSystem) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = system.dim();
    let p = system.a.nrows();
    let q = system.c.nrows();

    if system.a.ncols() != n && p > 0 {
        out.push(Violation::DimensionMismatch("A".into()));
    }
    if system.c.ncols() != n && q > 0 {
        out.push(Violation::DimensionMismatch("C".into()));
    }
    if system.b.len() != p {
        out.push(Violation::DimensionMismatch("b".into()));
    }
    if system.d.len() != q {
        out.push(Violation::DimensionMismatch("d".into()));
    }
    if let Some(y0) = &system.y0 {
        if y0.len() != n {
            out.push(Violation::DimensionMismatch("y0".into()));
        }
    }

    non_finite_matrix("A", &system.a, &mut out);
    non_finite_vector("b", system.b.as_slice(), &mut out);
    non_finite_matrix("C", &system.c, &mut out);
    non_finite_vector("d", system.d.as_slice(), &mut out);
    if let Some(y0) = &system.y0 {
        non_finite_vector("y0", y0.as_slice(), &mut out);
    }

    let threshold = ZERO_ROW_RTOL * system.a.amax().max(1.0);
    for (i, row) in system.a.row_iter().enumerate() {
        if !(row.norm() >= threshold) {
            out.push(Violation::ZeroInequalityRow(i));
        }
    }
    out
}

fn non_finite_matrix(field: &str, m: &DMatrix<f64>, out: &mut Vec<Violation>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                out.push(Violation::NonFinite {
                    field: field.into(),
                    index: i * m.ncols() + j,
                });
            }
        }
    }
}

fn non_finite_vector(field: &str, v: &[f64], out: &mut Vec<Violation>) {
    for (index, x) in v.iter().enumerate() {
        if !x.is_finite() {
            out.push(Violation::NonFinite {
                field: field.into(),
                index,
            });
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SystemFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    d: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    y0: Option<Vec<f64>>,
    /// Only written when no row or start point fixes the dimension.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    n: Option<usize>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Validation(vec![Violation::DimensionMismatch(
            name.into(),
        )]));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

impl SystemFile {
    fn into_system(self) -> Result<ConstraintSystem> {
        let n = self
            .a
            .first()
            .or(self.c.first())
            .map(Vec::len)
            .or(self.y0.as_ref().map(Vec::len))
            .or(self.n)
            .unwrap_or(0);
        if self.n.is_some_and(|explicit| explicit != n) {
            return Err(Error::Validation(vec![Violation::DimensionMismatch("n".into())]));
        }
        let a = matrix_from_rows("A", &self.a, n)?;
        let c = matrix_from_rows("C", &self.c, n)?;
        ConstraintSystem::new(
            a,
            DVector::from_vec(self.b),
            c,
            DVector::from_vec(self.d),
            self.y0.map(DVector::from_vec),
        )
    }
}

impl From<&ConstraintSystem> for SystemFile {
    fn from(s: &ConstraintSystem) -> Self {
        SystemFile {
            a: rows_of(&s.a),
            b: s.b.iter().copied().collect(),
            c: rows_of(&s.c),
            d: s.d.iter().copied().collect(),
            y0: s.y0.as_ref().map(|v| v.iter().copied().collect()),
            n: (s.a.nrows() == 0 && s.c.nrows() == 0 && s.y0.is_none()).then(|| s.dim()),
        }
    }
}

/// Parses a system from JSON text.
pub fn system_from_json(text: &str) -> Result<ConstraintSystem> {
    let file: SystemFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "<string>".into(),
        message: e.to_string(),
    })?;
    file.into_system()
}

pub fn system_to_json(system: &ConstraintSystem) -> String {
    serde_json::to_string(&SystemFile::from(system)).expect("finite floats always serialize")
}

pub fn load_system(path: impl AsRef<Path>) -> Result<ConstraintSystem> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let file: SystemFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    file.into_system()
}

pub fn save_system(system: &ConstraintSystem, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &system_to_json(system))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The full violation check passed after at least one step.
    Converged,
    /// The iteration budget ran out.
    IterationCap,
    /// The start point already met the tolerance.
    AlreadyFeasible,
}

/// Output of a repair solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub z_star: DVector<f64>,
    /// Final iterate in the reduced coordinates (equal to `z_star` for the naive solver).
    pub w_final: DVector<f64>,
    pub iterations: usize,
    pub max_ineq_violation: f64,
    pub max_eq_violation: f64,
    pub termination: Termination,
    pub residual_trace: Option<Vec<f64>>,
    /// `‖z_star - y0‖₂`.
    pub distance_moved: f64,
}

#[derive(Serialize, Deserialize)]
struct ResultFile {
    z_star: Vec<f64>,
    w_final: Vec<f64>,
    iterations: usize,
    max_ineq_violation: f64,
    max_eq_violation: f64,
    termination: Termination,
    distance_moved: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    residual_trace: Option<Vec<f64>>,
}

impl SolveResult {
    pub fn to_json(&self) -> String {
        let file = ResultFile {
            z_star: self.z_star.iter().copied().collect(),
            w_final: self.w_final.iter().copied().collect(),
            iterations: self.iterations,
            max_ineq_violation: self.max_ineq_violation,
            max_eq_violation: self.max_eq_violation,
            termination: self.termination,
            distance_moved: self.distance_moved,
            residual_trace: self.residual_trace.clone(),
        };
        serde_json::to_string_pretty(&file).expect("finite floats always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ResultFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<string>".into(),
            message: e.to_string(),
        })?;
        Ok(SolveResult {
            z_star: DVector::from_vec(f.z_star),
            w_final: DVector::from_vec(f.w_final),
            iterations: f.iterations,
            max_ineq_violation: f.max_ineq_violation,
            max_eq_violation: f.max_eq_violation,
            termination: f.termination,
            residual_trace: f.residual_trace,
            distance_moved: f.distance_moved,
        })
    }

    pub fn is_success(&self) -> bool {
        self.termination != Termination::IterationCap
    }
}

pub fn save_result(result: &SolveResult, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &result.to_json())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> ConstraintSystem {
        ConstraintSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            None,
        )
        .unwrap()
    }

    #[test]
    fn well_formed_system_has_no_violations() {
        assert!(validate(&toy()).is_empty());
    }

    #[test]
    fn zero_row_is_reported() {
        let mut s = toy();
        s.a[(1, 0)] = 0.0;
        s.a[(1, 1)] = 0.0;
        assert_eq!(validate(&s), vec![Violation::ZeroInequalityRow(1)]);
    }

    #[test]
    fn wrong_b_length_is_reported() {
        let mut s = toy();
        s.b = DVector::from_vec(vec![1.0]);
        assert_eq!(validate(&s), vec![Violation::DimensionMismatch("b".into())]);
    }

    #[test]
    fn column_mismatch_between_a_and_c() {
        let mut s = toy();
        s.c = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        s.d = DVector::from_vec(vec![0.0]);
        assert!(validate(&s).contains(&Violation::DimensionMismatch("A".into())));
    }

    #[test]
    fn nan_is_reported() {
        let mut s = toy();
        s.b[0] = f64::NAN;
        assert_eq!(
            validate(&s),
            vec![Violation::NonFinite {
                field: "b".into(),
                index: 0
            }]
        );
    }

    #[test]
    fn pure_equality_and_pure_inequality_are_admissible() {
        let eq = ConstraintSystem::new(
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 2.0]),
            None,
        );
        assert!(eq.is_ok());
        assert_eq!(eq.unwrap().dim(), 2);
    }

    #[test]
    fn parses_inequality_only_file() {
        let s = system_from_json(r#"{"A":[[1,0]],"b":[0],"C":[],"d":[],"y0":[2,0]}"#).unwrap();
        assert_eq!(s.num_inequalities(), 1);
        assert_eq!(s.num_equalities(), 0);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.c.ncols(), 2);
        assert_eq!(s.y0.unwrap().as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn missing_key_is_parse_error() {
        let e = system_from_json(r#"{"A":[[1,0]],"C":[],"d":[]}"#).unwrap_err();
        assert!(matches!(e, Error::Parse { .. }), "{e:?}");
    }

    #[test]
    fn zero_row_in_file_is_validation_error() {
        let e = system_from_json(r#"{"A":[[0,0]],"b":[0],"C":[],"d":[]}"#).unwrap_err();
        assert!(matches!(e, Error::Validation(ref v) if v == &[Violation::ZeroInequalityRow(0)]));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let e = system_from_json(r#"{"A":[[1,0],[1]],"b":[0,0],"C":[],"d":[]}"#).unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
    }

    #[test]
    fn save_to_missing_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("no/such/dir/system.json");
        assert!(matches!(save_system(&toy(), &path), Err(Error::Io { .. })));
    }

    #[test]
    fn termination_serializes_snake_case() {
        let r = SolveResult {
            z_star: DVector::zeros(1),
            w_final: DVector::zeros(1),
            iterations: 3,
            max_ineq_violation: 0.0,
            max_eq_violation: 0.0,
            termination: Termination::Converged,
            residual_trace: None,
            distance_moved: 0.5,
        };
        let json = r.to_json();
        assert!(json.contains("\"termination\": \"converged\""), "{json}");
        assert!(!json.contains("residual_trace"));
        assert_eq!(SolveResult::from_json(&json).unwrap(), r);
        let cap = SolveResult {
            termination: Termination::IterationCap,
            ..r.clone()
        };
        assert!(cap.to_json().contains("\"iteration_cap\""));
        let feasible = SolveResult {
            termination: Termination::AlreadyFeasible,
            ..r
        };
        assert!(feasible.to_json().contains("\"already_feasible\""));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e6..1e6_f64,
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
        ]
    }

    proptest! {
        #[test]
        fn save_load_is_bit_exact(
            n in 1usize..5,
            p in 0usize..4,
            q in 0usize..3,
            data in proptest::collection::vec(finite(), 64),
            with_y0 in any::<bool>(),
        ) {
            let mut it = data.iter().copied().cycle();
            let mut a = DMatrix::from_fn(p, n, |_, _| it.next().unwrap());
            for i in 0..p {
                // keep rows comfortably away from the degeneracy threshold
                a[(i, 0)] = a[(i, 0)].abs().max(1.0) + a.amax();
            }
            let b = DVector::from_fn(p, |_, _| it.next().unwrap());
            let c = DMatrix::from_fn(q, n, |_, _| it.next().unwrap());
            let d = DVector::from_fn(q, |_, _| it.next().unwrap());
            let y0 = with_y0.then(|| DVector::from_fn(n, |_, _| it.next().unwrap()));
            let s = ConstraintSystem::new(a, b, c, d, y0).unwrap();

            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.json");
            save_system(&s, &path).unwrap();
            let back = load_system(&path).unwrap();
            prop_assert_eq!(back.dim(), s.dim());
            let bits = |m: &[f64]| m.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(s.a.as_slice()), bits(back.a.as_slice()));
            prop_assert_eq!(bits(s.b.as_slice()), bits(back.b.as_slice()));
            prop_assert_eq!(bits(s.c.as_slice()), bits(back.c.as_slice()));
            prop_assert_eq!(bits(s.d.as_slice()), bits(back.d.as_slice()));
            prop_assert_eq!(
                s.y0.as_ref().map(|v| bits(v.as_slice())),
                back.y0.as_ref().map(|v| bits(v.as_slice()))
            );
        }
    }
}
