//! The recursion, its piecewise-linear interpolation, the averaged drift and
//! the limit ODE.
//!
//! Indexing: the segment started at index `n` consumes `ε_{n+k+1}` on its
//! `k`-th step, so breakpoint `k` sits at time `t_{n+k} − t_n`.

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel;
use crate::model::{Dynamics, SaModel};
use crate::schedule::StepSchedule;

/// Relative tolerance used when comparing horizons and start points.
pub const TIME_TOL: f64 = 1e-12;

/// Piecewise-linear trajectory on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Path {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "a path needs at least two breakpoints with one value each (got {} times, {} values)",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidInput(format!("path must start at t = 0, got {}", times[0])));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("breakpoint times must be finite and strictly increasing".into()));
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidInput("path values must be non-empty vectors of equal length".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("path values must be finite".into()));
        }
        Ok(Self { times, values })
    }

    pub fn constant(x: Vec<f64>, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![x.clone(), x])
    }

    /// `K` equal segments through the given `K + 1` points.
    pub fn uniform(points: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        let k = points.len().saturating_sub(1).max(1);
        let times = (0..points.len()).map(|j| if j == k { horizon } else { horizon * j as f64 / k as f64 }).collect();
        Self::new(times, points)
    }

    /// Straight line from `a` to `b` split into `k` equal segments.
    pub fn linear(a: &[f64], b: &[f64], horizon: f64, k: usize) -> Result<Self> {
        let k = k.max(1);
        let points = (0..=k)
            .map(|j| {
                let w = j as f64 / k as f64;
                a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
            })
            .collect();
        Self::uniform(points, horizon)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn start(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn end(&self) -> &[f64] {
        self.values.last().expect("non-empty")
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    /// Index of the segment containing `t`; breakpoints belong to the
    /// segment on their right, the horizon to the last segment.
    pub fn segment_of(&self, t: f64) -> usize {
        let j = self.times.partition_point(|&s| s <= t);
        j.saturating_sub(1).min(self.segments() - 1)
    }

    /// Value at `t`, clamped to `[0, T]`. Exact at breakpoints.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let j = self.segment_of(t);
        self.eval_on(j, t, out);
    }

    fn eval_on(&self, j: usize, t: f64, out: &mut [f64]) {
        let (s0, s1) = (self.times[j], self.times[j + 1]);
        let (a, b) = (&self.values[j], &self.values[j + 1]);
        if t <= s0 {
            out.copy_from_slice(a);
        } else if t >= s1 {
            out.copy_from_slice(b);
        } else {
            let w = (t - s0) / (s1 - s0);
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o = x + w * (y - x);
            }
        }
    }

    /// Slope of segment `j`.
    pub fn slope(&self, j: usize) -> Vec<f64> {
        let dt = self.times[j + 1] - self.times[j];
        self.values[j + 1].iter().zip(&self.values[j]).map(|(b, a)| (b - a) / dt).collect()
    }

    /// Header line plus one `t,x_1,…` row per breakpoint.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 1..=self.dim() {
            let _ = write!(s, ",x_{i}");
        }
        s.push('\n');
        for (t, v) in self.times.iter().zip(&self.values) {
            s.push_str(&format_f64(*t));
            for x in v {
                s.push(',');
                s.push_str(&format_f64(*x));
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`Path::to_csv`]. Lines starting with `#` are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::InvalidInput("empty path file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "t" {
            return Err(Error::InvalidInput(format!("bad path header '{header}'")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::InvalidInput(format!("row {} has {} fields, expected {}", i + 1, fields.len(), cols.len())));
            }
            let nums = fields
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::InvalidInput(format!("row {}: '{f}': {e}", i + 1))))
                .collect::<Result<Vec<f64>>>()?;
            times.push(nums[0]);
            values.push(nums[1..].to_vec());
        }
        Self::new(times, values)
    }
}

/// Sup-norm distance over the union of both breakpoint sets.
pub fn deviation_sup(a: &Path, b: &Path) -> Result<f64> {
    check_horizons(a, b)?;
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput("paths have different dimensions".into()));
    }
    Ok(deviation_sup_capped(a, b, f64::INFINITY))
}

fn check_horizons(a: &Path, b: &Path) -> Result<()> {
    let (ta, tb) = (a.horizon(), b.horizon());
    if (ta - tb).abs() > TIME_TOL * ta.abs().max(tb.abs()).max(1.0) {
        return Err(Error::InvalidInput(format!("horizon mismatch: {ta} vs {tb}")));
    }
    Ok(())
}

/// Like [`deviation_sup`] but stops as soon as the running sup exceeds `cap`.
pub(crate) fn deviation_sup_capped(a: &Path, b: &Path, cap: f64) -> f64 {
    let d = a.dim();
    let (mut va, mut vb) = (vec![0.0; d], vec![0.0; d]);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ja, mut jb) = (0usize, 0usize);
    let horizon = a.horizon().min(b.horizon());
    let mut sup = 0.0f64;
    loop {
        let ta = a.times.get(i).copied().unwrap_or(f64::INFINITY);
        let tb = b.times.get(j).copied().unwrap_or(f64::INFINITY);
        let t = ta.min(tb).min(horizon);
        while ja + 1 < a.segments() && a.times[ja + 1] <= t {
            ja += 1;
        }
        while jb + 1 < b.segments() && b.times[jb + 1] <= t {
            jb += 1;
        }
        a.eval_on(ja, t, &mut va);
        b.eval_on(jb, t, &mut vb);
        let dist = va.iter().zip(&vb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        sup = sup.max(dist);
        if sup > cap || t >= horizon {
            return sup;
        }
        if ta <= t {
            i += 1;
        }
        if tb <= t {
            j += 1;
        }
    }
}

/// Shortest round-trip decimal, switching to exponent notation outside
/// `[1e-5, 1e16)`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// Per-sample RNG: one ChaCha stream per sample index under a common seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulate `X^n` on `[0, T]` with stream 0 of `seed`.
pub fn simulate_segment(model: &SaModel, schedule: &StepSchedule, n: usize, horizon: f64, seed: u64) -> Result<Path> {
    simulate_segment_with(model, schedule, n, horizon, &mut stream_rng(seed, 0))
}

/// Simulate `X^n` on `[0, T]` drawing noise from `rng`.
pub fn simulate_segment_with(
    model: &SaModel,
    schedule: &StepSchedule,
    n: usize,
    horizon: f64,
    rng: &mut dyn RngCore,
) -> Result<Path> {
    let plan = SegmentPlan::new(schedule, n, horizon)?;
    simulate_plan(model, &plan, rng)
}

/// Breakpoint times `s_k = t_{n+k} − t_n` and steps `ε_{n+k}` of one segment,
/// computed once and shared across samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    horizon: f64,
    beta_n: usize,
    steps: Vec<(f64, f64)>,
}

impl SegmentPlan {
    pub fn new(schedule: &StepSchedule, n: usize, horizon: f64) -> Result<Self> {
        let beta_n = schedule.beta_n(n, horizon)?;
        if beta_n == 0 {
            return Err(Error::InvalidInput(format!("beta_n = 0 for n = {n}, T = {horizon}: the segment has no full step")));
        }
        let t_n = schedule.t_of(n)?;
        // one extra step covers the partial interval up to T
        let last = (n + beta_n + 1).min(schedule.len().unwrap_or(usize::MAX));
        let steps: Vec<(f64, f64)> =
            schedule.with_times(last, |ts| (n + 1..=last).map(|k| (ts[k] - t_n, ts[k] - ts[k - 1])).collect())?;
        if steps.last().is_none_or(|&(s, _)| s < horizon) {
            return Err(Error::InvalidInput("schedule ends before the horizon".into()));
        }
        Ok(Self { horizon, beta_n, steps })
    }

    pub fn beta_n(&self) -> usize {
        self.beta_n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Run one trajectory, calling `visit(t, x)` at every breakpoint from
/// `(0, x₀)` to `(T, X(T))`. Returning `false` from `visit` stops the run.
pub fn run_plan(
    model: &SaModel,
    plan: &SegmentPlan,
    rng: &mut dyn RngCore,
    mut visit: impl FnMut(f64, &[f64]) -> bool,
) {
    let mut x = model.x0.clone();
    if !visit(0.0, &x) {
        return;
    }
    let mut incr = vec![0.0; model.dim];
    let mut step = Stepper::new(model);
    let mut prev = 0.0;
    for &(s, eps) in &plan.steps {
        step.next_increment(model, &x, rng, &mut incr);
        if s >= plan.horizon {
            // land exactly on T
            let w = (plan.horizon - prev) / (s - prev);
            for (xi, gi) in x.iter_mut().zip(&incr) {
                *xi += w * eps * gi;
            }
            visit(plan.horizon, &x);
            return;
        }
        for (xi, gi) in x.iter_mut().zip(&incr) {
            *xi += eps * gi;
        }
        if !visit(s, &x) {
            return;
        }
        prev = s;
    }
}

pub fn simulate_plan(model: &SaModel, plan: &SegmentPlan, rng: &mut dyn RngCore) -> Result<Path> {
    let mut times = Vec::with_capacity(plan.steps.len() + 1);
    let mut values = Vec::with_capacity(plan.steps.len() + 1);
    run_plan(model, plan, rng, |t, x| {
        times.push(t);
        values.push(x.to_vec());
        true
    });
    Path::new(times, values)
}

/// Noise state carried along a trajectory.
pub(crate) struct Stepper {
    y: usize,
    scratch: Vec<f64>,
    drift: Vec<f64>,
}

impl Stepper {
    pub(crate) fn new(model: &SaModel) -> Self {
        let y = match &model.dynamics {
            Dynamics::Finite { y0, .. } => *y0,
            Dynamics::GaussianAdditive { .. } => 0,
        };
        Self { y, scratch: Vec::new(), drift: vec![0.0; model.dim] }
    }

    /// Draw `Y_{k+1} ~ ρ_x(Y_k, ·)` and write `g(x, Y_{k+1})` into `out`.
    pub(crate) fn next_increment(&mut self, model: &SaModel, x: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        match &model.dynamics {
            Dynamics::Finite { kernel, update, .. } => {
                self.y = kernel.sample_next(x, self.y, rng, &mut self.scratch);
                update.eval(x, self.y, out);
            }
            Dynamics::GaussianAdditive { drift, sigma } => {
                drift.eval(x, &mut self.drift);
                for (o, b) in out.iter_mut().zip(&self.drift) {
                    let z: f64 = StandardNormal.sample(&mut *rng);
                    *o = b + sigma * z;
                }
            }
        }
    }

}

/// `ḡ(x) = Σ_y g(x, y) π_x(y)`; the drift itself for additive-Gaussian models.
pub fn g_bar(model: &SaModel, x: &[f64]) -> Result<Vec<f64>> {
    model.check_point(x)?;
    match &model.dynamics {
        Dynamics::Finite { kernel, .. } => {
            let pi = kernel::invariant_measure(kernel.as_ref(), x, 1e-12)?;
            let table = model.update_table(x)?;
            let mut out = vec![0.0; model.dim];
            for (p, g) in pi.probabilities.iter().zip(table.rows()) {
                for (o, gi) in out.iter_mut().zip(g) {
                    *o += p * gi;
                }
            }
            Ok(out)
        }
        Dynamics::GaussianAdditive { drift, .. } => {
            let mut out = vec![0.0; model.dim];
            drift.eval(x, &mut out);
            Ok(out)
        }
    }
}

/// RK4 solution of `ẋ = ḡ(x)` from `x0`, sampled every `dt` (the last step is
/// shortened to land on `T`).
pub fn ode_limit(model: &SaModel, x0: &[f64], horizon: f64, dt: f64) -> Result<Path> {
    ode_limit_with(x0, horizon, dt, |x| g_bar(model, x))
}

pub fn ode_limit_with(x0: &[f64], horizon: f64, dt: f64, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Path> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be positive")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon = {horizon} must be positive")));
    }
    let steps = ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    values.push(x.clone());
    let axpy = |x: &[f64], h: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    for i in 1..=steps {
        let t = if i == steps { horizon } else { i as f64 * dt };
        let h = t - times[i - 1];
        let k1 = f(&x)?;
        let k2 = f(&axpy(&x, h / 2.0, &k1))?;
        let k3 = f(&axpy(&x, h / 2.0, &k2))?;
        let k4 = f(&axpy(&x, h, &k3))?;
        for j in 0..x.len() {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence { what: "limit ODE", iterations: i, residual: f64::INFINITY });
        }
        times.push(t);
        values.push(x.clone());
    }
    Path::new(times, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{IidKernel, MatrixKernel};
    use crate::model::{AffineUpdate, FnUpdate};
    use std::sync::Arc;

    fn bernoulli() -> SaModel {
        let k = Arc::new(IidKernel::uniform(2).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[-0.5, 0.5], 0.0).unwrap());
        SaModel::finite("bernoulli", k, g, vec![0.0], 0).unwrap()
    }

    #[test]
    fn zero_update_gives_constant_path() {
        let k = Arc::new(IidKernel::uniform(3).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[0.0, 0.0, 0.0], 0.0).unwrap());
        let m = SaModel::finite("zero", k, g, vec![0.7], 0).unwrap();
        for seed in 0..5 {
            let p = simulate_segment(&m, &StepSchedule::harmonic(), 100, 1.0, seed).unwrap();
            assert!(p.values().iter().all(|v| v[0] == 0.7));
            assert_eq!(p.horizon(), 1.0);
        }
    }

    #[test]
    fn one_point_noise_is_euler() {
        let k = Arc::new(IidKernel::new(vec![1.0]).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[0.0], 1.0).unwrap());
        let m = SaModel::finite("decay", k, g, vec![1.0], 0).unwrap();
        let s = StepSchedule::constant(0.1).unwrap();
        let p = simulate_segment(&m, &s, 5, 1.0, 9).unwrap();
        assert_eq!(p.segments(), 10);
        let mut x = 1.0f64;
        for v in p.values().iter().skip(1) {
            x *= 0.9;
            assert!((v[0] - x).abs() < 1e-14);
        }
        assert_eq!(p.horizon(), 1.0);
    }

    #[test]
    fn truncates_exactly_at_horizon() {
        let p = simulate_segment(&bernoulli(), &StepSchedule::harmonic(), 10, 1.0, 1).unwrap();
        assert_eq!(p.horizon(), 1.0);
        let beta = StepSchedule::harmonic().beta_n(10, 1.0).unwrap();
        assert!(p.segments() == beta + 1 || p.segments() == beta);
    }

    #[test]
    fn bernoulli_endpoint_mean_zero() {
        let m = bernoulli();
        let s = StepSchedule::harmonic();
        let ends: Vec<f64> = (0..1000).map(|i| simulate_segment(&m, &s, 10_000, 1.0, i).unwrap().end()[0]).collect();
        let mean = ends.iter().sum::<f64>() / ends.len() as f64;
        let var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (ends.len() - 1) as f64;
        let se = (var / ends.len() as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let m = bernoulli();
        let s = StepSchedule::harmonic();
        let a = simulate_segment(&m, &s, 500, 1.0, 42).unwrap();
        let b = simulate_segment(&m, &s, 500, 1.0, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_segment(&m, &s, 500, 1.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn g_bar_examples() {
        let k = Arc::new(IidKernel::new(vec![0.3, 0.7]).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[0.0, 1.0], 0.0).unwrap());
        let m = SaModel::finite("bern", k, g.clone(), vec![0.0], 0).unwrap();
        assert!((g_bar(&m, &[0.0]).unwrap()[0] - 0.7).abs() < 1e-12);
        let m2 = SaModel::finite("two", Arc::new(MatrixKernel::two_state(0.3, 0.6).unwrap()), g, vec![0.0], 0).unwrap();
        assert!((g_bar(&m2, &[0.0]).unwrap()[0] - 1.0 / 3.0).abs() < 1e-10);
        let k = Arc::new(IidKernel::uniform(2).unwrap());
        let flat = Arc::new(FnUpdate::new(1, |x, _z, out| out[0] = x[0].sin()));
        let m3 = SaModel::finite("flat", k, flat, vec![0.0], 0).unwrap();
        assert!((g_bar(&m3, &[0.4]).unwrap()[0] - 0.4f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn ode_decay_and_order() {
        let f = |x: &[f64]| Ok(vec![-x[0]]);
        let p = ode_limit_with(&[1.0], 1.0, 1e-3, f).unwrap();
        assert!((p.end()[0] - (-1f64).exp()).abs() < 1e-6);
        let e1 = (ode_limit_with(&[1.0], 1.0, 0.1, f).unwrap().end()[0] - (-1f64).exp()).abs();
        let e2 = (ode_limit_with(&[1.0], 1.0, 0.05, f).unwrap().end()[0] - (-1f64).exp()).abs();
        assert!(e1 / e2 > 12.0 && e1 / e2 < 20.0, "ratio {}", e1 / e2);
        let c = ode_limit_with(&[0.3], 2.0, 0.1, |_| Ok(vec![0.0])).unwrap();
        assert!(c.values().iter().all(|v| v[0] == 0.3));
        assert!((c.horizon() - 2.0).abs() == 0.0);
    }

    #[test]
    fn deviation_sup_examples() {
        let a = Path::linear(&[0.0], &[1.0], 1.0, 1).unwrap();
        let z = Path::constant(vec![0.0], 1.0).unwrap();
        let o = Path::constant(vec![1.0], 1.0).unwrap();
        assert_eq!(deviation_sup(&a, &a).unwrap(), 0.0);
        assert_eq!(deviation_sup(&z, &o).unwrap(), 1.0);
        assert_eq!(deviation_sup(&a, &z).unwrap(), 1.0);
        let tent = Path::new(vec![0.0, 0.3, 1.0], vec![vec![0.0], vec![2.0], vec![0.0]]).unwrap();
        assert_eq!(deviation_sup(&tent, &z).unwrap(), 2.0);
        assert!(deviation_sup(&z, &Path::constant(vec![0.0], 2.0).unwrap()).is_err());
    }

    #[test]
    fn path_eval_and_csv_round_trip() {
        let p = Path::new(vec![0.0, 0.25, 1.0], vec![vec![0.1, 1.0], vec![0.2, -1.0], vec![0.3, 0.5]]).unwrap();
        for (t, v) in p.times().iter().zip(p.values()) {
            assert_eq!(&p.eval(*t), v);
        }
        assert_eq!(p.segment_of(0.25), 1);
        assert_eq!(p.segment_of(1.0), 1);
        let back = Path::from_csv(&format!("# comment\n{}", p.to_csv())).unwrap();
        assert_eq!(back, p);
        assert!(Path::from_csv("t,x_1\n0,1\n0,2\n").is_err());
        assert!(Path::from_csv("t,x_1\n0,1\n1\n").is_err());
        assert!(Path::new(vec![0.1, 1.0], vec![vec![0.0], vec![0.0]]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn eval_exact_at_breakpoints(vals in proptest::collection::vec(-1e3f64..1e3, 2..20), gaps in proptest::collection::vec(1e-3f64..10.0, 19)) {
            let mut times = vec![0.0];
            for g in gaps.iter().take(vals.len() - 1) {
                times.push(times.last().unwrap() + g);
            }
            let p = Path::new(times.clone(), vals.iter().map(|v| vec![*v]).collect()).unwrap();
            for (t, v) in times.iter().zip(&vals) {
                proptest::prop_assert_eq!(p.eval(*t)[0], *v);
            }
            let back = Path::from_csv(&p.to_csv()).unwrap();
            proptest::prop_assert_eq!(back, p);
        }

        #[test]
        fn deviation_sup_is_symmetric_and_dominates_points(a in proptest::collection::vec(-5f64..5.0, 2..8), b in proptest::collection::vec(-5f64..5.0, 2..8), t in 0f64..1.0) {
            let pa = Path::uniform(a.iter().map(|v| vec![*v]).collect(), 1.0).unwrap();
            let pb = Path::uniform(b.iter().map(|v| vec![*v]).collect(), 1.0).unwrap();
            let d = deviation_sup(&pa, &pb).unwrap();
            proptest::prop_assert_eq!(d, deviation_sup(&pb, &pa).unwrap());
            proptest::prop_assert!((pa.eval(t)[0] - pb.eval(t)[0]).abs() <= d + 1e-12);
        }
    }
}
