//! Sampling Kaczmarz-Motzkin iteration for `A w <= b`.
//!
//! Each step draws `β` row indices, picks the most violated sampled row `i*`
//! and moves the iterate a `δ`-scaled projection toward its halfspace:
//!
//! ```text
//! w ← w - δ (a_i*·w - b_i*)₊ / ‖a_i*‖² · a_i*
//! ```
//!
//! Three momentum-style variants wrap the same projection step. Their exact
//! recursions are reconstructions from one-line descriptions:
//!
//! * GSKM: `w ← (1 - ξ) T(w) + ξ w`, where `T` is the basic step. `ξ = 0` is the basic method.
//! * MSKM (heavy ball): `w ← T(w) + μ (w - w_prev)`.
//! * NSKM (Nesterov): `v = w + μ (w - w_prev)`, `w ← T(v)`, with the row chosen at `v`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Termination, ZERO_ROW_RTOL};

pub const DEFAULT_DELTA: f64 = 1.0;
pub const DEFAULT_GSKM_XI: f64 = -0.25;
pub const DEFAULT_MOMENTUM: f64 = 0.25;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_CHECK_EVERY: usize = 10;

/// Sample size per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beta {
    /// `max(10, round(√p))`, clamped to `p`.
    Auto,
    Fixed(usize),
}

impl FromStr for Beta {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Beta::Auto);
        }
        s.parse::<usize>()
            .map(Beta::Fixed)
            .map_err(|_| format!("beta must be \"auto\" or a positive integer, got {s:?}"))
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Auto => f.write_str("auto"),
            Beta::Fixed(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Basic,
    /// Weighted averaging with the pre-step iterate.
    Gskm { xi: f64 },
    /// Nesterov look-ahead momentum.
    Nskm { mu: f64 },
    /// Heavy-ball momentum.
    Mskm { mu: f64 },
}

impl Variant {
    pub fn gskm() -> Self {
        Variant::Gskm {
            xi: DEFAULT_GSKM_XI,
        }
    }

    pub fn nskm() -> Self {
        Variant::Nskm {
            mu: DEFAULT_MOMENTUM,
        }
    }

    pub fn mskm() -> Self {
        Variant::Mskm {
            mu: DEFAULT_MOMENTUM,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::Gskm { .. } => "gskm",
            Variant::Nskm { .. } => "nskm",
            Variant::Mskm { .. } => "mskm",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(Variant::Basic),
            "gskm" => Ok(Variant::gskm()),
            "nskm" => Ok(Variant::nskm()),
            "mskm" => Ok(Variant::mskm()),
            _ => Err(format!("unknown variant {s:?} (expected basic|gskm|nskm|mskm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    WithReplacement,
    WithoutReplacement,
}

impl FromStr for Sampling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "with" | "with-replacement" => Ok(Sampling::WithReplacement),
            "without" | "without-replacement" => Ok(Sampling::WithoutReplacement),
            _ => Err(format!("unknown sampling mode {s:?} (expected with|without)")),
        }
    }
}

/// All tunables of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SkmConfig {
    /// Relaxation `δ`, must lie in `(0, 2)`.
    pub delta: f64,
    pub beta: Beta,
    pub max_iters: usize,
    /// Stop once the largest violation over all rows is at most this.
    pub tolerance: f64,
    /// Steps between full violation scans. `0` disables early stopping, so
    /// exactly `max_iters` steps are taken.
    pub check_every: usize,
    pub variant: Variant,
    pub sampling: Sampling,
    pub seed: u64,
    /// Start iterate; the origin when absent.
    pub w0: Option<DVector<f64>>,
    /// Keep the per-checkpoint violations in the solve result.
    pub record_trace: bool,
}

impl Default for SkmConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            beta: Beta::Auto,
            max_iters: DEFAULT_MAX_ITERS,
            tolerance: DEFAULT_TOLERANCE,
            check_every: DEFAULT_CHECK_EVERY,
            variant: Variant::Basic,
            sampling: Sampling::WithReplacement,
            seed: 0,
            w0: None,
            record_trace: false,
        }
    }
}

impl SkmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 2.0) {
            return Err(Error::Config(format!(
                "delta must be in (0,2), got {}",
                self.delta
            )));
        }
        if self.beta == Beta::Fixed(0) {
            return Err(Error::Config("beta must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance must be finite and non-negative, got {}",
                self.tolerance
            )));
        }
        match self.variant {
            Variant::Basic => {}
            Variant::Gskm { xi } if xi.is_finite() => {}
            Variant::Nskm { mu } | Variant::Mskm { mu } if mu.is_finite() => {}
            v => return Err(Error::Config(format!("non-finite parameter in {v:?}"))),
        }
        Ok(())
    }
}

/// Resolves the sample size against `p` rows.
pub fn resolve_beta(beta: Beta, p: usize) -> usize {
    let hi = p.max(1);
    match beta {
        Beta::Auto => ((p as f64).sqrt().round() as usize).max(10).clamp(1, hi),
        Beta::Fixed(k) => k.clamp(1, hi),
    }
}

/// Row-major copy of `A` with cached squared row norms.
#[derive(Debug, Clone)]
pub struct RowSystem {
    p: usize,
    m: usize,
    data: Vec<f64>,
    b: Vec<f64>,
    norms_sq: Vec<f64>,
}

impl RowSystem {
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let (p, m) = a.shape();
        if b.len() != p {
            return Err(Error::Dimension(format!(
                "b has length {}, A has {p} rows",
                b.len()
            )));
        }
        let mut data = Vec::with_capacity(p * m);
        for i in 0..p {
            data.extend(a.row(i).iter());
        }
        let zero = ZERO_ROW_RTOL * a.amax().max(1.0);
        let norms_sq = (0..p)
            .map(|i| {
                let s: f64 = data[i * m..(i + 1) * m].iter().map(|x| x * x).sum();
                // vanishing rows are never selected
                if s.sqrt() < zero {
                    0.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self {
            p,
            m,
            data,
            b: b.iter().copied().collect(),
            norms_sq,
        })
    }

    pub fn rows(&self) -> usize {
        self.p
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn norm_sq(&self, i: usize) -> f64 {
        self.norms_sq[i]
    }

    /// `a_i·w - b_i`.
    #[inline]
    pub fn residual(&self, i: usize, w: &[f64]) -> f64 {
        dot(self.row(i), w) - self.b[i]
    }

    /// `max(0, max_i (a_i·w - b_i))` over every row.
    pub fn max_violation(&self, w: &[f64]) -> f64 {
        (0..self.p).fold(0.0_f64, |acc, i| acc.max(self.residual(i, w)))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mutable iteration state. The RNG is owned, so a solve never shares randomness.
#[derive(Debug, Clone)]
pub struct SkmState {
    pub w: DVector<f64>,
    pub w_prev: DVector<f64>,
    pub k: usize,
    rng: ChaCha8Rng,
    sample: Vec<usize>,
    scratch: DVector<f64>,
}

impl SkmState {
    pub fn new(w0: DVector<f64>, seed: u64) -> Self {
        Self {
            w_prev: w0.clone(),
            scratch: w0.clone(),
            w: w0,
            k: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sample: Vec::new(),
        }
    }

    /// Index set drawn by the most recent step.
    pub fn last_sample(&self) -> &[usize] {
        &self.sample
    }
}

/// Draws a fresh index set `S_k` and advances the RNG.
pub fn sample_indices(state: &mut SkmState, p: usize, beta: usize, mode: Sampling) -> Vec<usize> {
    let mut out = Vec::with_capacity(beta);
    sample_into(&mut state.rng, p, beta, mode, &mut out);
    out
}

fn sample_into(rng: &mut ChaCha8Rng, p: usize, beta: usize, mode: Sampling, out: &mut Vec<usize>) {
    out.clear();
    match mode {
        Sampling::WithReplacement => out.extend((0..beta).map(|_| rng.random_range(0..p))),
        Sampling::WithoutReplacement => out.extend(index::sample(rng, p, beta.min(p))),
    }
}

/// Most violated row among a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    /// `a_i·w - b_i`, possibly non-positive.
    pub residual: f64,
    /// Another distinct sampled row attains the same residual.
    pub tie: bool,
}

/// `argmax_{i∈S} (a_i·w - b_i)`, ties going to the smallest row index.
///
/// Rows with vanishing norm are skipped; `None` when nothing selectable was sampled.
pub fn select_most_violated(sys: &RowSystem, w: &[f64], sample: &[usize]) -> Option<Selection> {
    let mut best: Option<Selection> = None;
    for &i in sample {
        if sys.norms_sq[i] == 0.0 {
            continue;
        }
        let r = sys.residual(i, w);
        match &mut best {
            None => {
                best = Some(Selection {
                    index: i,
                    residual: r,
                    tie: false,
                })
            }
            Some(b) => {
                if r > b.residual {
                    *b = Selection {
                        index: i,
                        residual: r,
                        tie: false,
                    };
                } else if r == b.residual && i != b.index {
                    b.tie = true;
                    b.index = b.index.min(i);
                }
            }
        }
    }
    best
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub selection: Option<Selection>,
    /// The projection moved the iterate (`residual > 0`).
    pub active: bool,
}

impl StepRecord {
    /// The step sits exactly on an activation boundary or on a tie between
    /// rows that would move the iterate.
    pub fn nondifferentiable(&self) -> bool {
        self.selection
            .is_some_and(|s| s.residual == 0.0 || (s.tie && s.residual > 0.0))
    }

    /// Tie between rows that would move the iterate.
    pub fn active_tie(&self) -> bool {
        self.selection.is_some_and(|s| s.tie && s.residual > 0.0)
    }
}

/// Projection step in place: `x ← x - δ r₊/‖a‖² a` for the row selected at `x`.
pub(crate) fn project_step(sys: &RowSystem, x: &mut [f64], sample: &[usize], delta: f64) -> StepRecord {
    let selection = select_most_violated(sys, x, sample);
    let mut active = false;
    if let Some(s) = selection {
        if s.residual > 0.0 {
            active = true;
            let scale = delta * s.residual / sys.norms_sq[s.index];
            for (xj, aj) in x.iter_mut().zip(sys.row(s.index)) {
                *xj -= scale * aj;
            }
        }
    }
    StepRecord { selection, active }
}

/// Advances `state` by one step of the configured variant.
pub fn skm_step(state: &mut SkmState, sys: &RowSystem, config: &SkmConfig) -> StepRecord {
    let beta = resolve_beta(config.beta, sys.p);
    let mut sample = std::mem::take(&mut state.sample);
    sample_into(&mut state.rng, sys.p, beta, config.sampling, &mut sample);

    let delta = config.delta;
    let SkmState {
        w, w_prev, scratch, ..
    } = state;
    let record = match config.variant {
        Variant::Basic => {
            scratch.copy_from(w);
            project_step(sys, scratch.as_mut_slice(), &sample, delta)
        }
        Variant::Gskm { xi } => {
            scratch.copy_from(w);
            let rec = project_step(sys, scratch.as_mut_slice(), &sample, delta);
            for (s, &wk) in scratch.iter_mut().zip(w.iter()) {
                *s = (1.0 - xi) * *s + xi * wk;
            }
            rec
        }
        Variant::Mskm { mu } => {
            scratch.copy_from(w);
            let rec = project_step(sys, scratch.as_mut_slice(), &sample, delta);
            for ((s, &wk), &wp) in scratch.iter_mut().zip(w.iter()).zip(w_prev.iter()) {
                *s += mu * (wk - wp);
            }
            rec
        }
        Variant::Nskm { mu } => {
            for ((s, &wk), &wp) in scratch.iter_mut().zip(w.iter()).zip(w_prev.iter()) {
                *s = wk + mu * (wk - wp);
            }
            project_step(sys, scratch.as_mut_slice(), &sample, delta)
        }
    };
    // rotate buffers: w_prev ← w, w ← scratch
    std::mem::swap(w_prev, w);
    std::mem::swap(w, scratch);
    state.sample = sample;
    state.k += 1;
    record
}

/// One recorded step of a sampling path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub sample: Vec<usize>,
    pub record: StepRecord,
}

/// Outcome of [`run`].
#[derive(Debug, Clone)]
pub struct SkmOutcome {
    pub w: DVector<f64>,
    /// Steps executed.
    pub iterations: usize,
    /// Step count at which `w` was produced; differs from `iterations` only
    /// when the budget ran out and an earlier checkpoint had a smaller violation.
    pub returned_step: usize,
    /// Violation recorded at every checkpoint.
    pub trace: Vec<f64>,
    pub termination: Termination,
    pub final_violation: f64,
    /// Steps `0..returned_step`, when requested.
    pub path: Option<Vec<PathStep>>,
}

/// Runs SKM on `A w <= b`.
pub fn run(a: &DMatrix<f64>, b: &DVector<f64>, config: &SkmConfig) -> Result<SkmOutcome> {
    let sys = RowSystem::new(a, b)?;
    run_rows(&sys, config, None, false)
}

/// Runs SKM on a prepared row system.
///
/// `monitor`, when given, replaces the default full-row violation scan at
/// checkpoints; the run converges once it returns a value `<= tolerance`.
/// With `record_path` the sampled sets and selections are kept.
pub fn run_rows(
    sys: &RowSystem,
    config: &SkmConfig,
    mut monitor: Option<&mut dyn FnMut(&[f64]) -> f64>,
    record_path: bool,
) -> Result<SkmOutcome> {
    config.validate()?;
    let m = sys.m;
    let w0 = match &config.w0 {
        Some(w) if w.len() != m => {
            return Err(Error::Dimension(format!(
                "w0 has length {}, system has {m} columns",
                w.len()
            )))
        }
        Some(w) => w.clone(),
        None => DVector::zeros(m),
    };
    let mut measure = |w: &[f64]| match monitor.as_mut() {
        Some(f) => f(w),
        None => sys.max_violation(w),
    };

    if sys.p == 0 {
        let v = measure(w0.as_slice());
        return Ok(SkmOutcome {
            w: w0,
            iterations: 0,
            returned_step: 0,
            trace: vec![v],
            termination: Termination::AlreadyFeasible,
            final_violation: v,
            path: record_path.then(Vec::new),
        });
    }

    let checks = config.check_every > 0;
    let mut state = SkmState::new(w0, config.seed);
    let mut trace = Vec::new();
    let mut path = record_path.then(Vec::new);

    let mut best: Option<(f64, DVector<f64>, usize)> = None;
    if checks || config.max_iters == 0 {
        let v = measure(state.w.as_slice());
        trace.push(v);
        if v <= config.tolerance {
            return Ok(SkmOutcome {
                w: state.w,
                iterations: 0,
                returned_step: 0,
                trace,
                termination: Termination::AlreadyFeasible,
                final_violation: v,
                path,
            });
        }
        best = Some((v, state.w.clone(), 0));
    }

    while state.k < config.max_iters {
        let record = skm_step(&mut state, sys, config);
        if let Some(p) = path.as_mut() {
            p.push(PathStep {
                sample: state.sample.clone(),
                record,
            });
        }
        if checks && (state.k % config.check_every == 0 || state.k == config.max_iters) {
            let v = measure(state.w.as_slice());
            trace.push(v);
            if v <= config.tolerance {
                return Ok(SkmOutcome {
                    iterations: state.k,
                    returned_step: state.k,
                    w: state.w,
                    trace,
                    termination: Termination::Converged,
                    final_violation: v,
                    path,
                });
            }
            if best.as_ref().is_none_or(|(bv, _, _)| v < *bv) {
                best = Some((v, state.w.clone(), state.k));
            }
        }
    }

    if !checks {
        let v = measure(state.w.as_slice());
        trace.push(v);
        let termination = if v <= config.tolerance {
            Termination::Converged
        } else {
            Termination::IterationCap
        };
        return Ok(SkmOutcome {
            iterations: state.k,
            returned_step: state.k,
            w: state.w,
            trace,
            termination,
            final_violation: v,
            path,
        });
    }

    let (v, w, step) = best.expect("checkpoint at k = 0 always recorded");
    if let Some(p) = path.as_mut() {
        p.truncate(step);
    }
    Ok(SkmOutcome {
        w,
        iterations: state.k,
        returned_step: step,
        trace,
        termination: Termination::IterationCap,
        final_violation: v,
        path,
    })
}
