//! The action functional `I(φ) = ∫₀ᵀ L(φ(t), φ̇(t)) / h(t) dt` on
//! piecewise-linear paths, and minimum-action search over breakpoints.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::SaModel;
use crate::rate::{Extended, RateEval};
use crate::schedule::StepSchedule;
use crate::sim::{self, Path};

/// Gauss-Legendre nodes and weights on `[−1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            x = 0.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Default quadrature nodes per segment.
pub const DEFAULT_NODES: usize = 8;

/// `I(φ)`; `+∞` when `φ` does not start at the model's `x₀`.
pub fn action(model: &SaModel, schedule: &StepSchedule, horizon: f64, path: &Path) -> Result<Extended> {
    action_with_nodes(model, schedule, horizon, path, DEFAULT_NODES)
}

pub fn action_with_nodes(
    model: &SaModel,
    schedule: &StepSchedule,
    horizon: f64,
    path: &Path,
    nodes: usize,
) -> Result<Extended> {
    if path.dim() != model.dim {
        return Err(Error::InvalidInput(format!("path dimension {} differs from model dimension {}", path.dim(), model.dim)));
    }
    if (path.horizon() - horizon).abs() > sim::TIME_TOL * horizon.max(1.0) {
        return Err(Error::InvalidInput(format!("path horizon {} differs from T = {horizon}", path.horizon())));
    }
    let scale = 1.0 + linalg::norm2(&model.x0);
    if linalg::dist2(path.start(), &model.x0) > 1e-9 * scale {
        return Ok(Extended::PosInfinity);
    }
    let (xi, wi) = gauss_legendre(nodes.max(1));
    let mut total = 0.0;
    let mut x = vec![0.0; model.dim];
    for j in 0..path.segments() {
        let (s0, s1) = (path.times()[j], path.times()[j + 1]);
        let half = 0.5 * (s1 - s0);
        let beta = path.slope(j);
        for (&u, &w) in xi.iter().zip(&wi) {
            let t = s0 + half * (1.0 + u);
            path.eval_into(t, &mut x);
            let l = RateEval::new(model, &x)?.local_rate(&beta)?.value;
            let Some(l) = l.finite() else {
                return Ok(Extended::PosInfinity);
            };
            total += w * half * l / schedule.h_limit(horizon, t)?;
        }
    }
    Ok(Extended::Finite(total))
}

/// Minimum-action problem over paths with `K` equal segments.
#[derive(Debug, Clone)]
pub struct ActionProblem {
    pub model: SaModel,
    pub schedule: StepSchedule,
    pub horizon: f64,
    /// `None` leaves the end point free.
    pub end: Option<Vec<f64>>,
    pub segments: usize,
    pub nodes: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl ActionProblem {
    pub fn new(model: SaModel, schedule: StepSchedule, horizon: f64, end: Option<Vec<f64>>, segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::InvalidInput("at least one segment is required".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon {horizon} must be positive")));
        }
        if let Some(e) = &end {
            model.check_point(e)?;
        }
        Ok(Self { model, schedule, horizon, end, segments, nodes: DEFAULT_NODES, max_iter: 300, grad_tol: 1e-7 })
    }

    fn dim(&self) -> usize {
        self.model.dim
    }

    fn unknowns(&self) -> usize {
        let free = if self.end.is_some() { self.segments - 1 } else { self.segments };
        free * self.dim()
    }

    fn path_from(&self, v: &[f64]) -> Result<Path> {
        let d = self.dim();
        let mut points = Vec::with_capacity(self.segments + 1);
        points.push(self.model.x0.clone());
        for chunk in v.chunks(d) {
            points.push(chunk.to_vec());
        }
        if let Some(e) = &self.end {
            points.push(e.clone());
        }
        Path::uniform(points, self.horizon)
    }

    fn unknowns_from(&self, path: &Path) -> Vec<f64> {
        let k = self.segments;
        let upto = if self.end.is_some() { k } else { k + 1 };
        (1..upto).flat_map(|j| path.eval(self.horizon * j as f64 / k as f64)).collect()
    }

    fn objective(&self, v: &[f64]) -> Result<f64> {
        if v.iter().any(|x| !x.is_finite()) {
            return Ok(f64::INFINITY);
        }
        let path = self.path_from(v)?;
        Ok(action_with_nodes(&self.model, &self.schedule, self.horizon, &path, self.nodes)?.to_f64())
    }

    /// Gradient of the discretized action in the free breakpoints from the
    /// envelope identities `∂_β L = α*` and `∂_x L = −∂_x H(x, α*)`, the latter
    /// by central differences at fixed `α*`, projected on the increment span
    /// at each breakpoint. `None` when some node has an infinite or boundary
    /// rate, or a perturbed point leaves the domain.
    fn envelope_gradient(&self, v: &[f64]) -> Result<Option<Vec<f64>>> {
        let path = self.path_from(v)?;
        let d = self.dim();
        let k = self.segments;
        let (xi, wi) = gauss_legendre(self.nodes.max(1));
        // gradient with respect to every breakpoint, including the fixed ones
        let mut full = vec![0.0; (k + 1) * d];
        let mut x = vec![0.0; d];
        for j in 0..k {
            let (s0, s1) = (path.times()[j], path.times()[j + 1]);
            let len = s1 - s0;
            let beta = path.slope(j);
            for (&u, &w) in xi.iter().zip(&wi) {
                let theta = 0.5 * (1.0 + u);
                let t = s0 + theta * len;
                path.eval_into(t, &mut x);
                let rate = RateEval::new(&self.model, &x)?.local_rate(&beta)?;
                if !rate.value.is_finite() || linalg::norm2(&rate.alpha) > 0.5 * crate::rate::ALPHA_CAP {
                    return Ok(None);
                }
                let c = w * 0.5 * len / self.schedule.h_limit(self.horizon, t)?;
                for i in 0..d {
                    let step = 1e-6 * (1.0 + x[i].abs());
                    let mut xp = x.clone();
                    xp[i] += step;
                    let mut xm = x.clone();
                    xm[i] -= step;
                    let (Ok(ep), Ok(em)) = (RateEval::new(&self.model, &xp), RateEval::new(&self.model, &xm)) else {
                        return Ok(None);
                    };
                    let dx_l = -(ep.hamiltonian(&rate.alpha)? - em.hamiltonian(&rate.alpha)?) / (2.0 * step);
                    let db_l = rate.alpha[i] / len;
                    full[j * d + i] += c * ((1.0 - theta) * dx_l - db_l);
                    full[(j + 1) * d + i] += c * (theta * dx_l + db_l);
                }
            }
        }
        let upto = if self.end.is_some() { k } else { k + 1 };
        // keep each breakpoint's move inside the local increment span
        let mut grad = Vec::with_capacity((upto - 1) * d);
        for j in 1..upto {
            let basis = RateEval::new(&self.model, &path.values()[j])?.increment_span();
            let gj = &full[j * d..(j + 1) * d];
            let off = linalg::project_out(gj, &basis);
            grad.extend(gj.iter().zip(&off).map(|(a, b)| a - b));
        }
        Ok(Some(grad))
    }

    fn gradient(&self, v: &[f64], f0: f64) -> Result<Vec<f64>> {
        match self.envelope_gradient(v)? {
            Some(g) => Ok(g),
            None => fd_gradient(self, v, f0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinActionResult {
    #[serde(skip)]
    pub path: Path,
    pub value: Extended,
    pub converged: bool,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Index of the start that produced the result (0 = linear, 1 = ODE).
    pub start: usize,
}

/// Local minimizer of the discretized action.
///
/// Starts: the straight line to the fixed end (the constant path at `x₀`
/// when the end is free) and, for a free end, the limit ODE path. Each start
/// runs quasi-Newton descent with finite-difference gradients and
/// backtracking; the lowest value wins, ties going to the first start.
pub fn min_action_path(problem: &ActionProblem) -> Result<MinActionResult> {
    let k = problem.segments;
    let x0 = problem.model.x0.clone();
    let mut starts = Vec::new();
    match &problem.end {
        Some(e) => starts.push(Path::linear(&x0, e, problem.horizon, k)?),
        None => {
            starts.push(Path::linear(&x0, &x0, problem.horizon, k)?);
            let ode = sim::ode_limit(&problem.model, &x0, problem.horizon, problem.horizon / (k as f64 * 64.0))?;
            starts.push(ode);
        }
    }
    let runs: Vec<Result<MinActionResult>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = descend(problem, problem.unknowns_from(p))?;
            r.start = i;
            Ok(r)
        })
        .collect();
    let mut best: Option<MinActionResult> = None;
    let mut last_err = None;
    for r in runs {
        match r {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.value.to_f64() < b.value.to_f64()) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(b) if b.value.is_finite() => Ok(b),
        Some(_) => Err(Error::Infeasible("the action is infinite at every start".into())),
        None => Err(last_err.unwrap_or_else(|| Error::Infeasible("no start could be evaluated".into()))),
    }
}

fn fd_gradient(problem: &ActionProblem, v: &[f64], f0: f64) -> Result<Vec<f64>> {
    let mut g = vec![0.0; v.len()];
    let mut w = v.to_vec();
    for i in 0..v.len() {
        let h = 1e-6 * (1.0 + v[i].abs());
        w[i] = v[i] + h;
        let fp = problem.objective(&w)?;
        w[i] = v[i] - h;
        let fm = problem.objective(&w)?;
        w[i] = v[i];
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - f0) / h,
            (false, true) => (f0 - fm) / h,
            (false, false) => 0.0,
        };
    }
    Ok(g)
}

fn descend(problem: &ActionProblem, mut v: Vec<f64>) -> Result<MinActionResult> {
    let n = problem.unknowns();
    let mut f = problem.objective(&v)?;
    if n == 0 || !f.is_finite() {
        return Ok(MinActionResult {
            path: problem.path_from(&v)?,
            value: if f.is_finite() { Extended::Finite(f) } else { Extended::PosInfinity },
            converged: n == 0,
            grad_norm: 0.0,
            iterations: 0,
            start: 0,
        });
    }
    let mut g = problem.gradient(&v, f)?;
    let mut hinv = ndarray::Array2::<f64>::eye(n);
    let mut converged = false;
    let mut finite_differences = false;
    let mut iterations = 0;
    for it in 0..problem.max_iter {
        iterations = it + 1;
        if linalg::norm2(&g) <= problem.grad_tol {
            converged = true;
            break;
        }
        let mut dir: Vec<f64> = linalg::mat_vec(hinv.view(), &g).iter().map(|x| -x).collect();
        let mut slope = linalg::dot(&dir, &g);
        if slope >= 0.0 {
            hinv = ndarray::Array2::eye(n);
            dir = g.iter().map(|x| -x).collect();
            slope = -linalg::dot(&g, &g);
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            // a trial the rate solver cannot handle is a rejected step
            let ft = problem.objective(&trial).unwrap_or(f64::INFINITY);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                next = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((vn, fn_)) = next else {
            if finite_differences {
                break;
            }
            // retry with one-sided differences, which stay feasible
            finite_differences = true;
            g = fd_gradient(problem, &v, f)?;
            hinv = ndarray::Array2::eye(n);
            continue;
        };
        let gn = if finite_differences { fd_gradient(problem, &vn, fn_)? } else { problem.gradient(&vn, fn_)? };
        let s: Vec<f64> = vn.iter().zip(&v).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = linalg::dot(&s, &y);
        if sy > 1e-16 * linalg::norm2(&s) * linalg::norm2(&y) {
            let hy = linalg::mat_vec(hinv.view(), &y);
            let yhy = linalg::dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[[i, j]] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let small_change = (f - fn_).abs() <= 1e-15 * (1.0 + f.abs());
        v = vn;
        f = fn_;
        g = gn;
        if small_change && linalg::norm2(&s) <= 1e-12 * (1.0 + linalg::norm2(&v)) {
            break;
        }
    }
    let grad_norm = linalg::norm2(&g);
    converged |= grad_norm <= problem.grad_tol;
    Ok(MinActionResult {
        path: problem.path_from(&v)?,
        value: Extended::Finite(f),
        converged,
        grad_norm,
        iterations,
        start: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{IidKernel, MatrixKernel};
    use crate::model::AffineUpdate;
    use std::sync::Arc;

    fn bern() -> SaModel {
        let k = Arc::new(IidKernel::uniform(2).unwrap());
        SaModel::finite("bern", k, Arc::new(AffineUpdate::scalar(&[0.0, 1.0], 0.0).unwrap()), vec![0.0], 0).unwrap()
    }

    fn relaxing() -> SaModel {
        let k = Arc::new(MatrixKernel::two_state(0.3, 0.6).unwrap());
        SaModel::finite("relax", k, Arc::new(AffineUpdate::scalar(&[-1.0, 1.0], 1.0).unwrap()), vec![0.8], 0).unwrap()
    }

    fn kl(b: f64) -> f64 {
        b * (2.0 * b).ln() + (1.0 - b) * (2.0 * (1.0 - b)).ln()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for p in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-12, "n {n} p {p}");
            }
        }
        let (x, _) = gauss_legendre(8);
        assert!((x[7] - 0.960_289_856_497_536_3).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_path_has_zero_action() {
        let m = relaxing();
        let xstar = -1.0 / 3.0;
        let m = m.with_x0(vec![xstar]).unwrap();
        let p = Path::constant(vec![xstar], 1.0).unwrap();
        let a = action(&m, &StepSchedule::harmonic(), 1.0, &p).unwrap().finite().unwrap();
        assert!(a < 1e-12);
    }

    #[test]
    fn harmonic_weight_integrates_to_one() {
        let p = Path::linear(&[0.0], &[0.75], 1.0, 1).unwrap();
        let a = action(&bern(), &StepSchedule::harmonic(), 1.0, &p).unwrap().finite().unwrap();
        assert!((a - kl(0.75)).abs() < 1e-9, "{a}");
    }

    #[test]
    fn additivity_with_unit_time_scale() {
        let p = Path::new(vec![0.0, 0.4, 1.0], vec![vec![0.0], vec![0.4 * 0.7], vec![0.4 * 0.7 + 0.6 * 0.55]]).unwrap();
        let a = action(&bern(), &StepSchedule::polynomial(0.5).unwrap(), 1.0, &p).unwrap().finite().unwrap();
        assert!((a - (0.4 * kl(0.7) + 0.6 * kl(0.55))).abs() < 1e-9);
    }

    #[test]
    fn off_start_and_infeasible_paths_are_infinite() {
        let s = StepSchedule::harmonic();
        let off = Path::constant(vec![0.5], 1.0).unwrap();
        assert_eq!(action(&bern(), &s, 1.0, &off).unwrap(), Extended::PosInfinity);
        let steep = Path::linear(&[0.0], &[1.5], 1.0, 2).unwrap();
        assert_eq!(action(&bern(), &s, 1.0, &steep).unwrap(), Extended::PosInfinity);
    }

    #[test]
    fn straight_line_is_optimal_for_x_independent_update() {
        let sched = StepSchedule::polynomial(0.5).unwrap();
        let prob = ActionProblem::new(bern(), sched, 1.0, Some(vec![0.7]), 4).unwrap();
        let r = min_action_path(&prob).unwrap();
        assert!((r.value.finite().unwrap() - kl(0.7)).abs() < 1e-7);
        for j in 0..4 {
            assert!((r.path.slope(j)[0] - 0.7).abs() < 1e-3);
        }
    }

    #[test]
    fn two_segments_match_brute_force() {
        let m = relaxing();
        let s = StepSchedule::harmonic();
        let mut prob = ActionProblem::new(m.clone(), s.clone(), 1.0, Some(vec![0.6]), 2).unwrap();
        prob.grad_tol = 1e-10;
        let r = min_action_path(&prob).unwrap();
        let brute = (0..=200)
            .map(|i| {
                let mid = -1.0 + 2.0 * i as f64 / 200.0;
                let p = Path::uniform(vec![vec![0.8], vec![mid], vec![0.6]], 1.0).unwrap();
                action(&m, &s, 1.0, &p).unwrap().to_f64()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(r.value.finite().unwrap() <= brute + 1e-4);
        assert!(brute - r.value.finite().unwrap() < 1e-3);
    }

    #[test]
    fn free_end_recovers_ode() {
        let m = relaxing();
        let s = StepSchedule::harmonic();
        let prob = ActionProblem::new(m.clone(), s.clone(), 1.0, None, 16).unwrap();
        let r = min_action_path(&prob).unwrap();
        let ode = sim::ode_limit(&m, &[0.8], 1.0, 1e-3).unwrap();
        assert!(r.value.finite().unwrap() <= 1e-4, "{:?}", r.value);
        assert!(sim::deviation_sup(&r.path, &ode).unwrap() <= 1e-2);
        let a = action(&m, &s, 1.0, &ode).unwrap().finite().unwrap();
        assert!(a <= 1e-4, "{a}");
    }

    #[test]
    fn quadrature_converges_on_smooth_path() {
        let m = relaxing();
        let s = StepSchedule::harmonic();
        let p = Path::uniform(vec![vec![0.8], vec![0.6], vec![0.45], vec![0.3]], 1.0).unwrap();
        let a8 = action_with_nodes(&m, &s, 1.0, &p, 8).unwrap().finite().unwrap();
        let a16 = action_with_nodes(&m, &s, 1.0, &p, 16).unwrap().finite().unwrap();
        assert!((a8 - a16).abs() < 1e-6, "{a8} {a16}");
    }

    #[test]
    fn envelope_gradient_matches_finite_differences() {
        let m = crate::models::state_dependent_two_state(0.2, 0.7, [-1.0, 1.0], 1.0, 0.3).unwrap();
        for end in [None, Some(vec![0.1])] {
            let prob = ActionProblem::new(m.clone(), StepSchedule::harmonic(), 1.0, end, 3).unwrap();
            let v: Vec<f64> = (0..prob.unknowns()).map(|i| 0.25 - 0.1 * i as f64).collect();
            let f = prob.objective(&v).unwrap();
            let env = prob.envelope_gradient(&v).unwrap().expect("interior path");
            let fd = fd_gradient(&prob, &v, f).unwrap();
            for (a, b) in env.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{env:?} vs {fd:?}");
            }
        }
    }
}
