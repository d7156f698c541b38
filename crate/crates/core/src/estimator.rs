//! Monte Carlo Laplace functionals and tube probabilities at finite `n`.
//!
//! Sample `i` draws its noise from stream `i` of the run seed, and samples
//! are collected in index order, so results do not depend on the number of
//! worker threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SaModel;
use crate::schedule::StepSchedule;
use crate::sim::{self, Path, SegmentPlan};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceEstimate {
    pub n: usize,
    pub horizon: f64,
    pub samples: usize,
    pub beta_n: usize,
    /// `−(1/β_n) log (1/N) Σ e^{−β_n F_i}`
    pub value: f64,
    /// Jackknife standard error of `value`.
    pub std_error: f64,
    /// Number of functional values clamped to `[−M, M]`.
    pub clamped: usize,
}

/// `−(1/β) log mean e^{−β F_i}` evaluated with a shift by `min F`.
pub fn log_mean_exp_value(values: &[f64], beta: f64) -> f64 {
    let fmin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let s: f64 = values.iter().map(|f| (-beta * (f - fmin)).exp()).sum();
    fmin - (s / values.len() as f64).ln() / beta
}

/// Jackknife standard error of [`log_mean_exp_value`].
pub fn jackknife_error(values: &[f64], beta: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let (imin, fmin) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let terms: Vec<f64> = values.iter().map(|f| (-beta * (f - fmin)).exp()).collect();
    let total: f64 = terms.iter().sum();
    let m = (n - 1) as f64;
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            if i == imin {
                // dropping the minimum moves the shift; recompute from scratch
                let rest: Vec<f64> = values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect();
                log_mean_exp_value(&rest, beta)
            } else {
                fmin - ((total - terms[i]) / m).ln() / beta
            }
        })
        .collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    (m / n as f64 * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Laplace functional estimate for a path functional bounded by `bound`.
#[allow(clippy::too_many_arguments)]
pub fn laplace_functional(
    model: &SaModel,
    schedule: &StepSchedule,
    functional: &(dyn Fn(&Path) -> f64 + Sync),
    bound: f64,
    n: usize,
    horizon: f64,
    samples: usize,
    seed: u64,
) -> Result<LaplaceEstimate> {
    if samples < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {samples}")));
    }
    if !(bound > 0.0) {
        return Err(Error::InvalidInput(format!("functional bound {bound} must be positive")));
    }
    let plan = SegmentPlan::new(schedule, n, horizon)?;
    let raw: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let path = sim::simulate_plan(model, &plan, &mut sim::stream_rng(seed, i))?;
            Ok(functional(&path))
        })
        .collect::<Result<_>>()?;
    let mut clamped = 0;
    let values: Vec<f64> = raw
        .into_iter()
        .map(|f| {
            if f.is_nan() {
                clamped += 1;
                bound
            } else if f.abs() > bound {
                clamped += 1;
                f.clamp(-bound, bound)
            } else {
                f
            }
        })
        .collect();
    let beta = plan.beta_n() as f64;
    Ok(LaplaceEstimate {
        n,
        horizon,
        samples,
        beta_n: plan.beta_n(),
        value: log_mean_exp_value(&values, beta),
        std_error: jackknife_error(&values, beta),
        clamped,
    })
}

/// `F(φ) = min(1, ‖φ − reference‖_∞)`.
pub fn capped_deviation(reference: Path) -> impl Fn(&Path) -> f64 + Sync {
    move |p: &Path| sim::deviation_sup(p, &reference).map(|d| d.min(1.0)).unwrap_or(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubeEstimate {
    pub n: usize,
    pub horizon: f64,
    pub samples: usize,
    pub beta_n: usize,
    pub radius: f64,
    pub hits: usize,
    pub probability: f64,
    /// `−(1/β_n) log p̂` when at least one path stayed in the tube.
    pub log_rate: Option<f64>,
    /// With no hits: the rate is only known to be at least `log(N)/β_n`.
    pub censored_lower_bound: Option<f64>,
}

/// Fraction of trajectories staying within sup-distance `radius` of `phi`.
/// `radius = +∞` returns probability 1 without simulating.
#[allow(clippy::too_many_arguments)]
pub fn tube_probability(
    model: &SaModel,
    schedule: &StepSchedule,
    phi: &Path,
    radius: f64,
    n: usize,
    horizon: f64,
    samples: usize,
    seed: u64,
) -> Result<TubeEstimate> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("tube radius {radius} must be positive")));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    if phi.dim() != model.dim {
        return Err(Error::InvalidInput("reference path dimension differs from the model".into()));
    }
    if (phi.horizon() - horizon).abs() > sim::TIME_TOL * horizon.max(1.0) {
        return Err(Error::InvalidInput(format!("reference horizon {} differs from T = {horizon}", phi.horizon())));
    }
    let plan = SegmentPlan::new(schedule, n, horizon)?;
    let hits = if radius == f64::INFINITY {
        samples
    } else {
        (0..samples as u64)
            .into_par_iter()
            .map(|i| stays_in_tube(model, &plan, phi, radius, &mut sim::stream_rng(seed, i)) as usize)
            .sum()
    };
    let beta = plan.beta_n() as f64;
    let probability = hits as f64 / samples as f64;
    let (log_rate, censored_lower_bound) =
        if hits == 0 { (None, Some((samples as f64).ln() / beta)) } else { (Some(-probability.ln() / beta), None) };
    Ok(TubeEstimate {
        n,
        horizon,
        samples,
        beta_n: plan.beta_n(),
        radius,
        hits,
        probability,
        log_rate,
        censored_lower_bound,
    })
}

/// Stream one trajectory and compare with `phi` on the union of both
/// breakpoint sets, stopping at the first exit.
fn stays_in_tube(model: &SaModel, plan: &SegmentPlan, phi: &Path, radius: f64, rng: &mut dyn rand::RngCore) -> bool {
    let d = model.dim;
    let mut inside = true;
    let mut prev_t = 0.0;
    let mut prev_x = vec![0.0; d];
    let mut r = vec![0.0; d];
    let mut cursor = 1usize;
    let mut first = true;
    let refs = phi.times();
    let far = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() > radius * radius;
    sim::run_plan(model, plan, rng, |t, x| {
        if first {
            first = false;
        } else {
            while cursor < refs.len() && refs[cursor] < t {
                let w = (refs[cursor] - prev_t) / (t - prev_t);
                let interp: Vec<f64> = prev_x.iter().zip(x).map(|(a, b)| a + w * (b - a)).collect();
                if far(&interp, &phi.values()[cursor]) {
                    inside = false;
                    return false;
                }
                cursor += 1;
            }
        }
        phi.eval_into(t, &mut r);
        if far(x, &r) {
            inside = false;
            return false;
        }
        prev_t = t;
        prev_x.copy_from_slice(x);
        true
    });
    inside
}

/// One row of a sweep over `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub beta_n: usize,
    pub estimate: f64,
    pub error: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn laplace_sweep(
    model: &SaModel,
    schedule: &StepSchedule,
    functional: &(dyn Fn(&Path) -> f64 + Sync),
    bound: f64,
    ns: &[usize],
    horizon: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    ns.iter()
        .map(|&n| {
            let e = laplace_functional(model, schedule, functional, bound, n, horizon, samples, seed)?;
            Ok(SweepRow { n, beta_n: e.beta_n, estimate: e.value, error: e.std_error })
        })
        .collect()
}
