use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use skm_core::skm::{DEFAULT_DELTA, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use skm_core::{Beta, Sampling, SkmConfig, Variant};

/// Process outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
    CheckFailed,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        match s {
            Status::Success => ExitCode::SUCCESS,
            Status::NotConverged => ExitCode::from(2),
            Status::CheckFailed => ExitCode::from(3),
        }
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct SolverArgs {
    /// Relaxation parameter in (0, 2).
    #[arg(long, default_value_t = DEFAULT_DELTA, allow_negative_numbers = true)]
    pub delta: f64,
    /// Rows sampled per step: "auto" or a positive integer.
    #[arg(long, default_value = "auto")]
    pub beta: Beta,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    /// Maximum violation accepted as converged.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// basic | gskm | nskm | mskm
    #[arg(long, default_value = "basic")]
    pub variant: Variant,
    /// with | without (replacement)
    #[arg(long, default_value = "with")]
    pub sampling: Sampling,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverArgs {
    pub fn config(&self) -> Result<SkmConfig> {
        let config = SkmConfig {
            delta: self.delta,
            beta: self.beta,
            max_iters: self.max_iters,
            tolerance: self.tol,
            variant: self.variant,
            sampling: self.sampling,
            seed: self.seed,
            ..Default::default()
        };
        config.validate()?;
        Ok(config)
    }
}

/// Worker count from `SKM_THREADS`; `0` (all cores) when unset.
pub fn workers() -> Result<usize> {
    match std::env::var("SKM_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .with_context(|| format!("SKM_THREADS must be a non-negative integer, got {v:?}")),
        _ => Ok(0),
    }
}

pub fn thread_pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers()?)
        .build()
        .context("failed to start worker threads")
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of trial `trial` at dimension `dim`, shared by every mode and value.
pub fn trial_seed(seed: u64, dim: usize, trial: usize) -> u64 {
    splitmix(seed ^ splitmix(((dim as u64) << 32) ^ trial as u64))
}

/// Shape used by sweeps and benchmarks: `p = n` inequalities, `q = n / 2` equalities.
pub fn instance_shape(n: usize) -> (usize, usize) {
    (n, n / 2)
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, u128) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_nanos())
}

/// Parses `a,b,c` or an inclusive range `lo:hi:step`.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad range bound {s:?}"))
        };
        let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            bail!("bad range {text:?}: need lo <= hi and step > 0");
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        // snap to a 1e-12 grid so 0.2 + 3·0.2 prints as 0.8
        return Ok((0..=count)
            .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
            .collect());
    }
    if parts.len() != 1 {
        bail!("bad value list {text:?}: use a,b,c or lo:hi:step");
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad value {s:?} in {text:?}"))
        })
        .collect()
}

pub fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    Ok(w)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(
            parse_values("0.2:1.8:0.2").unwrap(),
            vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8]
        );
        assert_eq!(parse_values("1,4.5, 7").unwrap(), vec![1.0, 4.5, 7.0]);
        assert_eq!(parse_values("1:1:0.5").unwrap(), vec![1.0]);
        assert!(parse_values("2:1:0.5").is_err());
        assert!(parse_values("0:1:0").is_err());
        assert!(parse_values("a,b").is_err());
        assert!(parse_values("1:2").is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn trial_seeds_differ() {
        assert_ne!(trial_seed(0, 10, 0), trial_seed(0, 10, 1));
        assert_ne!(trial_seed(0, 10, 0), trial_seed(0, 11, 0));
        assert_eq!(trial_seed(5, 10, 3), trial_seed(5, 10, 3));
    }
}
