//! Shared fixtures for the criterion benchmarks.

use skm_core::generators::{gen_repair_problem, DEFAULT_VIOLATION_SCALE};
use skm_core::ConstraintSystem;

/// Benchmark instance of dimension `n` with `p = n` inequalities and `q = n/2` equalities.
pub fn instance(n: usize, seed: u64) -> ConstraintSystem {
    gen_repair_problem(n, n, n / 2, seed, DEFAULT_VIOLATION_SCALE)
        .expect("generator accepts these shapes")
        .system
}
