//! Step-size schedules and the time bookkeeping built on them.
//!
//! Indexing convention: step sizes are `ε_k` for `k ≥ 1` and the recursion
//! consumes the step at its destination index, so the move from iterate `k`
//! to `k + 1` uses `ε_{k+1}`. Accumulated times are `t_n = Σ_{k=1}^n ε_k`,
//! `t_0 = 0`, and every derived quantity (`m(t)`, `β_n`, `hⁿ`) is computed
//! from the cached `t_n` table so that exact tests see one set of numbers.
//!
//! `hⁿ(t) = β_n ε_{n+i-1}` on `[t_{n+i-1} - t_n, t_{n+i} - t_n)`. On the
//! tail `[t_{n+β_n} - t_n, T)`, which the interval family does not cover,
//! the same rule is continued with `i = β_n + 1`.

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest index the time cache will grow to (about 256 MiB of `f64`).
pub const MAX_INDEX: usize = 1 << 25;

/// Relative slack used when comparing a time against cached partial sums.
const TIME_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule parameter: {0}")]
    InvalidParameter(String),
    #[error("custom schedule exhausted: index {index} requested, {len} steps available")]
    Exhausted { index: usize, len: usize },
    #[error("index {0} exceeds the supported cache size")]
    IndexTooLarge(usize),
    #[error("time {t} outside [0, {horizon})")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("start index must be at least 1")]
    ZeroIndex,
    #[error("numeric time-scale limit did not converge: values {values:?}")]
    NonConvergent { values: Vec<f64> },
}

/// Step-size family. Serialized with a `kind` tag for experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepKind {
    /// `ε_k = 1/k`
    Harmonic,
    /// `ε_k = (k+1)^{-ρ}`, `ρ ∈ (0, 1)`
    Polynomial { rho: f64 },
    /// `ε_k = ε`
    Constant { epsilon: f64 },
    /// Explicit finite list `ε_1, ε_2, …`
    Custom { steps: Vec<f64> },
}

impl StepKind {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        match self {
            StepKind::Harmonic => Ok(()),
            StepKind::Polynomial { rho } => {
                if rho.is_finite() && *rho > 0.0 && *rho < 1.0 {
                    Ok(())
                } else {
                    Err(ScheduleError::InvalidParameter(format!("rho = {rho} not in (0, 1)")))
                }
            }
            StepKind::Constant { epsilon } => {
                if epsilon.is_finite() && *epsilon > 0.0 {
                    Ok(())
                } else {
                    Err(ScheduleError::InvalidParameter(format!("epsilon = {epsilon} must be > 0")))
                }
            }
            StepKind::Custom { steps } => {
                if steps.is_empty() {
                    return Err(ScheduleError::InvalidParameter("empty custom schedule".into()));
                }
                if steps.len() > MAX_INDEX {
                    return Err(ScheduleError::IndexTooLarge(steps.len()));
                }
                match steps.iter().position(|e| !(e.is_finite() && *e > 0.0)) {
                    Some(k) => Err(ScheduleError::InvalidParameter(format!(
                        "custom step {} = {} must be finite and > 0",
                        k + 1,
                        steps[k]
                    ))),
                    None => Ok(()),
                }
            }
        }
    }
}

/// A step-size schedule with a lazily grown table of partial sums `t_n`.
///
/// The table only ever grows; readers take a shared lock, growth takes the
/// exclusive lock, extends, then releases. Shareable across threads.
#[derive(Debug)]
pub struct StepSchedule {
    kind: StepKind,
    times: RwLock<Vec<f64>>,
}

impl Clone for StepSchedule {
    fn clone(&self) -> Self {
        Self { kind: self.kind.clone(), times: RwLock::new(self.times.read().clone()) }
    }
}

impl PartialEq for StepSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl StepSchedule {
    pub fn new(kind: StepKind) -> Result<Self, ScheduleError> {
        kind.validate()?;
        Ok(Self { kind, times: RwLock::new(vec![0.0]) })
    }

    pub fn harmonic() -> Self {
        Self::new(StepKind::Harmonic).expect("harmonic is always valid")
    }

    pub fn polynomial(rho: f64) -> Result<Self, ScheduleError> {
        Self::new(StepKind::Polynomial { rho })
    }

    pub fn constant(epsilon: f64) -> Result<Self, ScheduleError> {
        Self::new(StepKind::Constant { epsilon })
    }

    pub fn custom(steps: Vec<f64>) -> Result<Self, ScheduleError> {
        Self::new(StepKind::Custom { steps })
    }

    pub fn kind(&self) -> &StepKind {
        &self.kind
    }

    /// `ε_k` for `k ≥ 1`.
    pub fn epsilon(&self, k: usize) -> Result<f64, ScheduleError> {
        if k == 0 {
            return Err(ScheduleError::ZeroIndex);
        }
        Ok(match &self.kind {
            StepKind::Harmonic => 1.0 / k as f64,
            StepKind::Polynomial { rho } => ((k + 1) as f64).powf(-rho),
            StepKind::Constant { epsilon } => *epsilon,
            StepKind::Custom { steps } => *steps
                .get(k - 1)
                .ok_or(ScheduleError::Exhausted { index: k, len: steps.len() })?,
        })
    }

    /// Number of defined steps, `None` when unbounded.
    pub fn len(&self) -> Option<usize> {
        match &self.kind {
            StepKind::Custom { steps } => Some(steps.len()),
            _ => None,
        }
    }

    fn grow_to(&self, n: usize) -> Result<(), ScheduleError> {
        if self.times.read().len() > n {
            return Ok(());
        }
        if n > MAX_INDEX {
            return Err(ScheduleError::IndexTooLarge(n));
        }
        if let Some(len) = self.len() {
            if n > len {
                return Err(ScheduleError::Exhausted { index: n, len });
            }
        }
        let mut times = self.times.write();
        let mut target = n.max(2 * times.len()).min(MAX_INDEX);
        if let Some(len) = self.len() {
            target = target.min(len);
        }
        let missing = (target + 1).saturating_sub(times.len());
        times.reserve(missing);
        while times.len() <= target {
            let k = times.len();
            let t = match &self.kind {
                StepKind::Constant { epsilon } => k as f64 * epsilon,
                _ => times[k - 1] + self.epsilon(k)?,
            };
            times.push(t);
        }
        Ok(())
    }

    /// Grow the table until it contains an entry strictly greater than `t`.
    fn grow_past(&self, t: f64) -> Result<(), ScheduleError> {
        loop {
            let (len, last) = {
                let times = self.times.read();
                (times.len(), *times.last().expect("t_0 always present"))
            };
            if last > t + slack(t) {
                return Ok(());
            }
            let mut target = (2 * len).max(16);
            if let Some(total) = self.len() {
                if len > total {
                    return Err(ScheduleError::Exhausted { index: len, len: total });
                }
                target = target.min(total);
            }
            self.grow_to(target)?;
        }
    }

    /// Run `f` on the cached slice `[t_0, …, t_upto]`.
    pub fn with_times<R>(&self, upto: usize, f: impl FnOnce(&[f64]) -> R) -> Result<R, ScheduleError> {
        self.grow_to(upto)?;
        let times = self.times.read();
        Ok(f(&times[..=upto]))
    }

    /// `t_n = Σ_{k=1}^n ε_k`.
    pub fn t_of(&self, n: usize) -> Result<f64, ScheduleError> {
        self.grow_to(n)?;
        Ok(self.times.read()[n])
    }

    /// `m(t) = max{n : t_n ≤ t}`. A time equal to some `t_n` (up to a
    /// relative slack of 1e-12) returns `n`.
    pub fn m_of(&self, t: f64) -> Result<usize, ScheduleError> {
        if !(t >= 0.0) {
            return Ok(0);
        }
        self.grow_past(t)?;
        let times = self.times.read();
        let bound = t + slack(t);
        Ok(times.partition_point(|&s| s <= bound) - 1)
    }

    /// `β_n = m(t_n + T) − n`.
    pub fn beta_n(&self, n: usize, horizon: f64) -> Result<usize, ScheduleError> {
        check_horizon(horizon)?;
        let tn = self.t_of(n)?;
        Ok(self.m_of(tn + horizon)? - n)
    }

    /// `hⁿ(t) = β_n ε_{n+i-1}` for `t ∈ [0, T)`.
    pub fn h_n(&self, n: usize, horizon: f64, t: f64) -> Result<f64, ScheduleError> {
        check_horizon(horizon)?;
        if n == 0 {
            return Err(ScheduleError::ZeroIndex);
        }
        if !(t >= 0.0 && t < horizon) {
            return Err(ScheduleError::TimeOutOfRange { t, horizon });
        }
        let beta = self.beta_n(n, horizon)?;
        let tn = self.t_of(n)?;
        // interval index i with t in [t_{n+i-1} - t_n, t_{n+i} - t_n)
        let i = self.m_of(tn + t)? - n + 1;
        Ok(beta as f64 * self.epsilon(n + i - 1)?)
    }

    /// The uniform limit `h(t)` of `hⁿ`.
    ///
    /// Harmonic: `e^{-t}(e^T - 1)`. Polynomial: `1`. Constant: `⌊T/ε⌋ε`,
    /// which is independent of `n`. Custom: extrapolated from `hⁿ` at
    /// `n ∈ {10³, 10⁴, 10⁵}`, see [`StepSchedule::h_limit_numeric`].
    pub fn h_limit(&self, horizon: f64, t: f64) -> Result<f64, ScheduleError> {
        check_horizon(horizon)?;
        if !(t >= 0.0 && t <= horizon) {
            return Err(ScheduleError::TimeOutOfRange { t, horizon });
        }
        match &self.kind {
            StepKind::Harmonic => Ok((-t).exp() * horizon.exp_m1()),
            StepKind::Polynomial { .. } => Ok(1.0),
            StepKind::Constant { epsilon } => Ok(self.beta_n(1, horizon)? as f64 * epsilon),
            StepKind::Custom { .. } => {
                let ext = self.h_limit_numeric(horizon, t)?;
                if ext.converged {
                    Ok(ext.value)
                } else {
                    Err(ScheduleError::NonConvergent { values: ext.samples.to_vec() })
                }
            }
        }
    }

    /// Richardson-style extrapolation of `hⁿ(t)` over `n ∈ {10³, 10⁴, 10⁵}`.
    ///
    /// Assumes `hⁿ − h ≈ c·n^{-p}`; the ratio of successive differences
    /// gives `10^p`. Converged when the differences shrink or are already
    /// below 1e-9.
    pub fn h_limit_numeric(&self, horizon: f64, t: f64) -> Result<Extrapolation, ScheduleError> {
        let probe = if t >= horizon { horizon * (1.0 - 1e-12) } else { t };
        let mut samples = [0.0; 3];
        for (slot, n) in samples.iter_mut().zip([1_000usize, 10_000, 100_000]) {
            *slot = self.h_n(n, horizon, probe)?;
        }
        let d1 = samples[0] - samples[1];
        let d2 = samples[1] - samples[2];
        if d2.abs() < 1e-9 {
            return Ok(Extrapolation { value: samples[2], converged: true, samples });
        }
        let ratio = d1 / d2;
        if ratio > 1.0 {
            let value = samples[2] - d2 / (ratio - 1.0);
            Ok(Extrapolation { value, converged: value > 0.0, samples })
        } else {
            Ok(Extrapolation { value: samples[2], converged: false, samples })
        }
    }
}

/// Result of the numeric time-scale extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrapolation {
    pub value: f64,
    pub converged: bool,
    pub samples: [f64; 3],
}

fn slack(t: f64) -> f64 {
    TIME_SLACK * (1.0 + t.abs())
}

fn check_horizon(horizon: f64) -> Result<(), ScheduleError> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(ScheduleError::InvalidParameter(format!("horizon {horizon} must be > 0")))
    }
}
