//! Pointwise rate machinery: relative entropy, the Hamiltonian as the log
//! Perron root of the tilted kernel, its gradient, the local rate by
//! Legendre transform, the empirical-measure rate in its two forms and the
//! time-dependent Hamiltonian.
//!
//! The coupling-program solver lives in [`crate::coupling`] and is kept
//! independent of everything here.

use std::fmt;

use ndarray::{Array1, Array2};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernel::{self, support_structure};
use crate::linalg;
use crate::model::{Dynamics, SaModel};
use crate::schedule::StepSchedule;

/// A value in `[−∞, +∞]` where the only infinity produced is `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Extended {
    Finite(f64),
    PosInfinity,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::PosInfinity => None,
        }
    }

    /// `f64::INFINITY` for `+∞`; for printing and comparisons only.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn add(self, other: Extended) -> Extended {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::PosInfinity,
        }
    }

    pub fn scale(self, c: f64) -> Extended {
        match self {
            Extended::Finite(a) => Extended::Finite(a * c),
            Extended::PosInfinity => Extended::PosInfinity,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::PosInfinity => f.write_str("inf"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_f64(*v),
            Extended::PosInfinity => s.serialize_str("inf"),
        }
    }
}

/// `Σ p log(p/q)` with `0 log 0 = 0`; `+∞` when `p` charges a `q`-null point.
pub fn relative_entropy(p: &[f64], q: &[f64]) -> Result<Extended> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!("shapes differ: {} vs {}", p.len(), q.len())));
    }
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a < 0.0 || b < 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput("relative entropy needs nonnegative finite weights".into()));
        }
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(Extended::PosInfinity);
        }
        acc += a * (a / b).ln();
    }
    Ok(Extended::Finite(acc))
}

/// Relative entropy of two matrices of the same shape.
pub fn relative_entropy_matrix(p: &Array2<f64>, q: &Array2<f64>) -> Result<Extended> {
    if p.dim() != q.dim() {
        return Err(Error::InvalidInput("coupling shapes differ".into()));
    }
    relative_entropy(&p.iter().copied().collect::<Vec<_>>(), &q.iter().copied().collect::<Vec<_>>())
}

/// Perron root and vectors of the shifted tilted kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Perron {
    /// `log` of the Perron root of `K_α`.
    pub log_root: f64,
    /// Right vector, max-normalized.
    pub right: Vec<f64>,
    /// Left vector, max-normalized.
    pub left: Vec<f64>,
    /// Relative residual `‖K v − λ v‖∞ / (λ ‖v‖∞)` of the right vector.
    pub residual: f64,
    pub iterations: usize,
}

/// Relative residual required of the Perron vectors.
pub const PERRON_TOL: f64 = 1e-13;

/// Divergence cap on `‖α‖` in the Legendre transform.
pub const ALPHA_CAP: f64 = 1e3;

/// Frozen-`x` evaluator for `H(x, ·)`, `∇H(x, ·)` and `L(x, ·)`.
#[derive(Debug, Clone)]
pub struct RateEval {
    x: Vec<f64>,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Finite { rho: Array2<f64>, g: Array2<f64> },
    Gaussian { drift: Vec<f64>, sigma: f64 },
}

/// Maximizer data of the Legendre transform.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRate {
    pub value: Extended,
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

impl RateEval {
    pub fn new(model: &SaModel, x: &[f64]) -> Result<Self> {
        model.check_point(x)?;
        let inner = match &model.dynamics {
            Dynamics::Finite { kernel, .. } => {
                let rho = kernel.matrix(x);
                support_structure(&rho).into_result()?;
                Inner::Finite { rho, g: model.update_table(x)? }
            }
            Dynamics::GaussianAdditive { drift, sigma } => {
                let mut b = vec![0.0; model.dim];
                drift.eval(x, &mut b);
                Inner::Gaussian { drift: b, sigma: *sigma }
            }
        };
        Ok(Self { x: x.to_vec(), inner })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    fn check_alpha(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.dim() || alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput(format!("alpha must be a finite vector of length {}", self.dim())));
        }
        Ok(())
    }

    /// `K_α(y,z) = ρ(y,z) e^{⟨α,g(z)⟩ − c}` and the shift `c`.
    fn tilted(&self, rho: &Array2<f64>, g: &Array2<f64>, alpha: &[f64]) -> (Array2<f64>, f64) {
        let e: Vec<f64> = g.rows().into_iter().map(|r| linalg::dot(alpha, r.as_slice().expect("standard layout"))).collect();
        let c = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|v| (v - c).exp()).collect();
        let mut k = rho.clone();
        for mut row in k.rows_mut() {
            row.iter_mut().zip(&w).for_each(|(a, b)| *a *= b);
        }
        (k, c)
    }

    /// Perron data of `K_α`. Errors for additive-Gaussian models.
    pub fn perron(&self, alpha: &[f64]) -> Result<Perron> {
        self.check_alpha(alpha)?;
        let Inner::Finite { rho, g } = &self.inner else {
            return Err(Error::NoFiniteKernel);
        };
        let (k, c) = self.tilted(rho, g, alpha);
        let (lambda, right, res, it_r) = perron_vector(&k)?;
        let kt = k.t().to_owned();
        let (_, left, _, it_l) = perron_vector(&kt)?;
        Ok(Perron { log_root: c + lambda.ln(), right, left, residual: res, iterations: it_r + it_l })
    }

    /// `H(x, α)`; exactly 0 at `α = 0`, where `K_α` is stochastic. Use
    /// [`Self::perron`] for the computed root there.
    pub fn hamiltonian(&self, alpha: &[f64]) -> Result<f64> {
        self.check_alpha(alpha)?;
        match &self.inner {
            Inner::Finite { .. } if alpha.iter().all(|a| *a == 0.0) => Ok(0.0),
            Inner::Finite { rho, g } => {
                let (k, c) = self.tilted(rho, g, alpha);
                let (lambda, _, _, _) = perron_vector(&k)?;
                Ok(c + lambda.ln())
            }
            Inner::Gaussian { drift, sigma } => {
                Ok(linalg::dot(alpha, drift) + 0.5 * sigma * sigma * linalg::dot(alpha, alpha))
            }
        }
    }

    /// `H(x, α)` and `∇_α H(x, α)`.
    pub fn hamiltonian_and_grad(&self, alpha: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_alpha(alpha)?;
        match &self.inner {
            Inner::Finite { rho, g } => {
                let (k, c) = self.tilted(rho, g, alpha);
                let (lambda, v, _, _) = perron_vector(&k)?;
                let (_, u, _, _) = perron_vector(&k.t().to_owned())?;
                let uv = linalg::dot(&u, &v);
                let mut grad = vec![0.0; self.dim()];
                for ((y, z), &kyz) in k.indexed_iter() {
                    let w = u[y] * kyz * v[z];
                    if w != 0.0 {
                        for (gi, gz) in grad.iter_mut().zip(g.row(z)) {
                            *gi += w * gz;
                        }
                    }
                }
                grad.iter_mut().for_each(|gi| *gi /= lambda * uv);
                let h = if alpha.iter().all(|a| *a == 0.0) { 0.0 } else { c + lambda.ln() };
                Ok((h, grad))
            }
            Inner::Gaussian { drift, sigma } => {
                let h = linalg::dot(alpha, drift) + 0.5 * sigma * sigma * linalg::dot(alpha, alpha);
                Ok((h, drift.iter().zip(alpha).map(|(b, a)| b + sigma * sigma * a).collect()))
            }
        }
    }

    pub fn hamiltonian_grad(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        Ok(self.hamiltonian_and_grad(alpha)?.1)
    }

    /// Hessian of `a ↦ H(x, Σ a_k q_k)` for an orthonormal `basis`:
    /// eigenvector perturbation for small state spaces, central differences
    /// of the gradient otherwise.
    fn hessian(&self, coef: &[f64], basis: &[Vec<f64>]) -> Result<Array2<f64>> {
        let alpha: Vec<f64> = (0..self.dim()).map(|i| coef.iter().zip(basis).map(|(c, q)| c * q[i]).sum()).collect();
        if let Inner::Finite { rho, g } = &self.inner {
            if rho.nrows() <= ANALYTIC_HESSIAN_MAX_STATES {
                if let Some(h) = self.perturbation_hessian(rho, g, &alpha, basis)? {
                    return Ok(h);
                }
            }
        }
        self.fd_hessian(coef, &alpha, basis)
    }

    /// With `p_z = u_z v_z` for left/right Perron vectors normalized by
    /// `uᵀv = 1`, `∂_i H = Σ_z p_z ⟨q_i, g(z)⟩` and the derivatives of `u`, `v`
    /// solve the bordered systems `[K − λI, v; uᵀ, 0]`. `None` when a bordered
    /// system is singular.
    fn perturbation_hessian(
        &self,
        rho: &Array2<f64>,
        g: &Array2<f64>,
        alpha: &[f64],
        basis: &[Vec<f64>],
    ) -> Result<Option<Array2<f64>>> {
        let (s, r) = (rho.nrows(), basis.len());
        let (k, _) = self.tilted(rho, g, alpha);
        let (lambda, v, _, _) = perron_vector(&k)?;
        let kt = k.t().to_owned();
        let (_, mut u, _, _) = perron_vector(&kt)?;
        let uv = linalg::dot(&u, &v);
        u.iter_mut().for_each(|a| *a /= uv);
        let dg: Vec<Vec<f64>> =
            basis.iter().map(|q| g.rows().into_iter().map(|row| linalg::dot(q, row.as_slice().expect("standard layout"))).collect()).collect();
        let bordered = |m: &Array2<f64>, col: &[f64], row: &[f64]| {
            Array2::from_shape_fn((s + 1, s + 1), |(i, j)| match (i < s, j < s) {
                (true, true) => m[[i, j]] - if i == j { lambda } else { 0.0 },
                (true, false) => col[i],
                (false, true) => row[j],
                (false, false) => 0.0,
            })
        };
        let mut rhs_v = Array2::zeros((s + 1, r));
        let mut rhs_u = Array2::zeros((s + 1, r));
        for (j, d) in dg.iter().enumerate() {
            let m: f64 = (0..s).map(|z| u[z] * v[z] * d[z]).sum();
            let dv: Vec<f64> = (0..s).map(|z| d[z] * v[z]).collect();
            for y in 0..s {
                let kdv: f64 = k.row(y).iter().zip(&dv).map(|(a, b)| a * b).sum();
                rhs_v[[y, j]] = lambda * m * v[y] - kdv;
                let ktu: f64 = kt.row(y).iter().zip(&u).map(|(a, b)| a * b).sum();
                rhs_u[[y, j]] = lambda * m * u[y] - d[y] * ktu;
            }
        }
        let mut av = bordered(&k, &v, &u);
        let mut au = bordered(&kt, &u, &v);
        if linalg::solve_many_in_place(&mut av, &mut rhs_v).is_err()
            || linalg::solve_many_in_place(&mut au, &mut rhs_u).is_err()
        {
            return Ok(None);
        }
        let mut hess = Array2::zeros((r, r));
        for j in 0..r {
            for z in 0..s {
                let dp = rhs_u[[z, j]] * v[z] + u[z] * rhs_v[[z, j]];
                for i in 0..r {
                    hess[[i, j]] += dg[i][z] * dp;
                }
            }
        }
        Ok(Some((&hess + &hess.t()) * 0.5))
    }

    fn fd_hessian(&self, coef: &[f64], alpha: &[f64], basis: &[Vec<f64>]) -> Result<Array2<f64>> {
        let r = basis.len();
        let mut hess = Array2::zeros((r, r));
        for j in 0..r {
            let step = 1e-5 * coef[j].abs().max(1.0);
            let a: Vec<f64> = alpha.iter().zip(&basis[j]).map(|(a, q)| a + step * q).collect();
            let gp = self.hamiltonian_grad(&a)?;
            let a: Vec<f64> = alpha.iter().zip(&basis[j]).map(|(a, q)| a - step * q).collect();
            let gm = self.hamiltonian_grad(&a)?;
            let diff: Vec<f64> = gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * step)).collect();
            for i in 0..r {
                hess[[i, j]] = linalg::dot(&basis[i], &diff);
            }
        }
        Ok((&hess + &hess.t()) * 0.5)
    }

    /// Orthonormal basis of the directions spanned by the increment
    /// differences `g(z) − g(z₀)`; the full coordinate basis for Gaussian
    /// noise. `H` is affine along the orthogonal complement.
    pub fn increment_span(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        match &self.inner {
            Inner::Finite { g, .. } => {
                let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let g0: Vec<f64> = g.row(0).to_vec();
                let diffs: Vec<Vec<f64>> =
                    g.rows().into_iter().skip(1).map(|r| r.iter().zip(&g0).map(|(a, b)| a - b).collect()).collect();
                linalg::orthonormal_basis(diffs.iter().map(Vec::as_slice), SPAN_TOL * scale)
            }
            Inner::Gaussian { .. } => (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        }
    }

    /// `L(x, β) = sup_α {⟨α, β⟩ − H(x, α)}`.
    ///
    /// Levenberg-Marquardt damped Newton ascent from `α = 0`. When `‖α‖`
    /// passes [`ALPHA_CAP`] the objective is compared at the cap and at half
    /// the cap along the same ray: a still-growing objective means `+∞`, a
    /// saturated one means `β` sits on the boundary of the feasible set and
    /// the saturated value is returned.
    pub fn local_rate(&self, beta: &[f64]) -> Result<LocalRate> {
        if beta.len() != self.dim() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be a finite vector of length {}", self.dim())));
        }
        if let Inner::Gaussian { drift, sigma } = &self.inner {
            let diff: Vec<f64> = beta.iter().zip(drift).map(|(b, m)| b - m).collect();
            let n2 = linalg::dot(&diff, &diff);
            if *sigma == 0.0 {
                let value = if n2 == 0.0 { Extended::Finite(0.0) } else { Extended::PosInfinity };
                return Ok(LocalRate { value, alpha: vec![0.0; self.dim()], iterations: 0 });
            }
            let s2 = sigma * sigma;
            return Ok(LocalRate {
                value: Extended::Finite(n2 / (2.0 * s2)),
                alpha: diff.iter().map(|v| v / s2).collect(),
                iterations: 0,
            });
        }
        let d = self.dim();
        let basis = self.increment_span();
        let Inner::Finite { g, .. } = &self.inner else { unreachable!("gaussian handled above") };
        let offset: Vec<f64> = beta.iter().zip(g.row(0)).map(|(b, g0)| b - g0).collect();
        let scale = g.iter().fold(1.0 + linalg::norm2(beta), |m, v| m.max(v.abs()));
        if linalg::norm2(&linalg::project_out(&offset, &basis)) > BETA_PLANE_TOL * scale {
            return Ok(LocalRate { value: Extended::PosInfinity, alpha: vec![0.0; d], iterations: 0 });
        }
        let r = basis.len();
        let reduce = |v: &[f64]| -> Vec<f64> { basis.iter().map(|q| linalg::dot(q, v)).collect() };
        let lift = |a: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; d];
            for (c, q) in a.iter().zip(&basis) {
                out.iter_mut().zip(q).for_each(|(o, qi)| *o += c * qi);
            }
            out
        };
        let beta_r = reduce(beta);
        let objective = |a: &[f64], h: f64| linalg::dot(a, beta) - h;
        let mut coef = vec![0.0; r];
        let mut alpha = vec![0.0; d];
        let (h0, mut grad_h) = self.hamiltonian_and_grad(&alpha)?;
        let mut f = objective(&alpha, h0);
        let mut damping = 1e-8;
        let max_iter = 500;
        for it in 0..max_iter {
            let resid: Vec<f64> = beta_r.iter().zip(reduce(&grad_h)).map(|(b, g)| b - g).collect();
            let rnorm = linalg::norm2(&resid);
            if rnorm <= 1e-12 * (1.0 + linalg::norm2(beta)) {
                return Ok(LocalRate { value: Extended::Finite(f.max(0.0)), alpha, iterations: it });
            }
            if linalg::norm2(&alpha) > ALPHA_CAP {
                return self.at_cap(beta, alpha, it);
            }
            let hess = self.hessian(&coef, &basis)?;
            let mut accepted = false;
            for _ in 0..60 {
                let mut a = hess.clone();
                let scale = (0..r).map(|i| hess[[i, i]].abs()).fold(0.0, f64::max).max(1e-300);
                for i in 0..r {
                    a[[i, i]] += damping * scale.max(1.0);
                }
                let step = match linalg::solve(&a, &Array1::from(resid.clone())) {
                    Ok(s) => s.to_vec(),
                    Err(_) => {
                        damping = (damping * 10.0).max(1e-10);
                        continue;
                    }
                };
                // trust region: never move more than the cap in one step
                let sn = linalg::norm2(&step);
                let shrink = if sn > ALPHA_CAP { ALPHA_CAP / sn } else { 1.0 };
                let trial_coef: Vec<f64> = coef.iter().zip(&step).map(|(a, s)| a + shrink * s).collect();
                let trial = lift(&trial_coef);
                let (ht, gt) = self.hamiltonian_and_grad(&trial)?;
                let ft = objective(&trial, ht);
                // objective values carry the Perron-root error, so allow that much slack
                let noise = 1e-12 * (1.0 + ht.abs() + linalg::dot(&trial, beta).abs());
                if ft >= f - noise {
                    coef = trial_coef;
                    alpha = trial;
                    grad_h = gt;
                    let gained = ft - f;
                    f = ft;
                    damping = (damping * 0.1).max(1e-12);
                    accepted = true;
                    if gained.abs() <= 1e-16 * f.abs().max(1.0) && linalg::norm2(&step) * shrink <= 1e-14 * (1.0 + linalg::norm2(&alpha)) {
                        return Ok(LocalRate { value: Extended::Finite(f.max(0.0)), alpha, iterations: it });
                    }
                    break;
                }
                damping = (damping * 10.0).max(1e-10);
            }
            if !accepted {
                // no ascent direction left at working precision
                return Ok(LocalRate { value: Extended::Finite(f.max(0.0)), alpha, iterations: it });
            }
        }
        if linalg::norm2(&alpha) > 0.5 * ALPHA_CAP {
            return self.at_cap(beta, alpha, max_iter);
        }
        Err(Error::NonConvergence { what: "Legendre transform", iterations: max_iter, residual: f64::NAN })
    }

    fn at_cap(&self, beta: &[f64], alpha: Vec<f64>, iterations: usize) -> Result<LocalRate> {
        let n = linalg::norm2(&alpha);
        let dir: Vec<f64> = alpha.iter().map(|a| a / n).collect();
        let at = |r: f64| -> Result<f64> {
            let a: Vec<f64> = dir.iter().map(|v| v * r).collect();
            Ok(linalg::dot(&a, beta) - self.hamiltonian(&a)?)
        };
        let far = at(ALPHA_CAP)?;
        let near = at(0.5 * ALPHA_CAP)?;
        if far - near > 1e-9 * far.abs().max(1.0) {
            return Ok(LocalRate { value: Extended::PosInfinity, alpha, iterations });
        }
        Ok(LocalRate { value: Extended::Finite(far.max(near).max(0.0)), alpha, iterations })
    }
}

/// Largest noise space for which the Hessian of `H` comes from dense
/// bordered solves instead of finite differences.
const ANALYTIC_HESSIAN_MAX_STATES: usize = 512;

/// Relative tolerance for linear dependence among increment differences.
const SPAN_TOL: f64 = 1e-10;

/// Relative distance of `β` from the affine hull of the increments beyond
/// which `L(x, β) = +∞`.
pub const BETA_PLANE_TOL: f64 = 1e-9;

/// Power iteration from the ones vector, then shifted inverse iteration when
/// the subdominant ratio makes the plain iteration slow.
fn perron_vector(k: &Array2<f64>) -> Result<(f64, Vec<f64>, f64, usize)> {
    let s = k.nrows();
    let mut v = vec![1.0; s];
    let mut kv = vec![0.0; s];
    let mut lambda = 0.0;
    let apply = |v: &[f64], out: &mut [f64]| {
        for (o, row) in out.iter_mut().zip(k.rows()) {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    };
    let residual = |v: &[f64], kv: &[f64], lambda: f64| -> f64 {
        let vmax = v.iter().cloned().fold(0.0, f64::max);
        kv.iter().zip(v).map(|(a, b)| (a - lambda * b).abs()).fold(0.0, f64::max) / (lambda * vmax)
    };
    let power_iter = 200;
    let mut res = f64::INFINITY;
    for it in 0..power_iter {
        apply(&v, &mut kv);
        let m = kv.iter().cloned().fold(0.0, f64::max);
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::NonConvergence { what: "Perron iteration", iterations: it, residual: f64::NAN });
        }
        // Rayleigh quotient and residual of the current v
        lambda = linalg::dot(&kv, &v) / linalg::dot(&v, &v);
        res = residual(&v, &kv, lambda);
        if res <= PERRON_TOL {
            return Ok((lambda, v, res, it + 1));
        }
        v.iter_mut().zip(&kv).for_each(|(a, b)| *a = b / m);
    }
    // shifted inverse iteration: (σI − K) w = v with σ just above λ
    let mut it = power_iter;
    for _ in 0..50 {
        let sigma = lambda * (1.0 + 1e-7) + f64::MIN_POSITIVE;
        let mut a = Array2::from_shape_fn((s, s), |(i, j)| if i == j { sigma } else { 0.0 } - k[[i, j]]);
        let mut b = Array1::from(v.clone());
        if linalg::solve_in_place(&mut a, &mut b).is_err() {
            break;
        }
        let m = b.iter().cloned().fold(f64::NEG_INFINITY, |acc, x| acc.max(x.abs()));
        let sign = if b.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        v = b.iter().map(|x| (sign * x / m).max(0.0)).collect();
        apply(&v, &mut kv);
        lambda = linalg::dot(&kv, &v) / linalg::dot(&v, &v);
        res = residual(&v, &kv, lambda);
        it += 1;
        if res <= PERRON_TOL {
            return Ok((lambda, v, res, it));
        }
    }
    if res <= 1e-10 {
        return Ok((lambda, v, res, it));
    }
    Err(Error::NonConvergence { what: "Perron iteration", iterations: it, residual: res })
}

/// `H(x, α)`.
pub fn hamiltonian(model: &SaModel, x: &[f64], alpha: &[f64]) -> Result<f64> {
    RateEval::new(model, x)?.hamiltonian(alpha)
}

/// `∇_α H(x, α)`.
pub fn hamiltonian_grad(model: &SaModel, x: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    RateEval::new(model, x)?.hamiltonian_grad(alpha)
}

/// `L(x, β)`.
pub fn local_rate(model: &SaModel, x: &[f64], beta: &[f64]) -> Result<Extended> {
    Ok(RateEval::new(model, x)?.local_rate(beta)?.value)
}

/// `H(t, x, α) = H(x, α h(t)) / h(t)`.
pub fn time_dep_hamiltonian(
    model: &SaModel,
    schedule: &StepSchedule,
    horizon: f64,
    t: f64,
    x: &[f64],
    alpha: &[f64],
) -> Result<f64> {
    let h = schedule.h_limit(horizon, t)?;
    let scaled: Vec<f64> = alpha.iter().map(|a| a * h).collect();
    Ok(hamiltonian(model, x, &scaled)? / h)
}

fn check_prob(mu: &[f64], size: usize) -> Result<()> {
    if mu.len() != size {
        return Err(Error::InvalidInput(format!("measure has length {}, expected {size}", mu.len())));
    }
    let sum: f64 = mu.iter().sum();
    if mu.iter().any(|m| !(*m >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("measure must be a probability vector".into()));
    }
    Ok(())
}

/// Donsker-Varadhan form `sup_{u>0} Σ μ_y log(u_y / (ρu)_y)`, maximized over
/// `w = log u` by damped Newton with the exact Hessian.
pub fn dv_rate(model: &SaModel, x: &[f64], mu: &[f64]) -> Result<f64> {
    let rho = model.kernel_matrix(x)?;
    check_prob(mu, rho.nrows())?;
    dv_rate_matrix(&rho, mu)
}

pub fn dv_rate_matrix(rho: &Array2<f64>, mu: &[f64]) -> Result<f64> {
    let s = rho.nrows();
    let value_and_parts = |w: &[f64]| -> (f64, Vec<Vec<f64>>) {
        let wmax = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ew: Vec<f64> = w.iter().map(|v| (v - wmax).exp()).collect();
        let mut val = 0.0;
        let mut probs = Vec::with_capacity(s);
        for y in 0..s {
            let row = rho.row(y);
            let tot: f64 = row.iter().zip(&ew).map(|(r, e)| r * e).sum();
            let p: Vec<f64> = row.iter().zip(&ew).map(|(r, e)| r * e / tot).collect();
            if mu[y] > 0.0 {
                val += mu[y] * (w[y] - wmax - tot.ln());
            }
            probs.push(p);
        }
        (val, probs)
    };
    let mut w = vec![0.0; s];
    let (mut f, mut probs) = value_and_parts(&w);
    let mut damping = 1e-10;
    for _ in 0..500 {
        let mut grad: Vec<f64> = mu.to_vec();
        let mut hess = Array2::<f64>::zeros((s, s));
        for y in 0..s {
            if mu[y] == 0.0 {
                continue;
            }
            for z in 0..s {
                grad[z] -= mu[y] * probs[y][z];
                hess[[z, z]] += mu[y] * probs[y][z];
                for zz in 0..s {
                    hess[[z, zz]] -= mu[y] * probs[y][z] * probs[y][zz];
                }
            }
        }
        if linalg::norm2(&grad) <= 1e-13 {
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            // w ↦ w + c·1 leaves the objective unchanged; damping fixes that direction
            let mut a = hess.clone();
            for i in 0..s {
                a[[i, i]] += damping + 1e-12;
            }
            let Ok(step) = linalg::solve(&a, &Array1::from(grad.clone())) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (ft, pt) = value_and_parts(&trial);
            if ft >= f - 1e-15 * f.abs().max(1.0) {
                let gain = ft - f;
                w = trial;
                f = ft;
                probs = pt;
                damping = (damping * 0.1).max(1e-14);
                improved = gain > 1e-16;
                break;
            }
            damping *= 10.0;
        }
        if !improved && damping > 1e20 {
            break;
        }
    }
    Ok(f.max(0.0))
}

/// `J(μ) = inf_{γ ∈ 𝒜(μ)} R(γ ‖ μ ⊗ ρ_x)`.
pub fn empirical_rate_j(model: &SaModel, x: &[f64], mu: &[f64]) -> Result<Extended> {
    let rho = model.kernel_matrix(x)?;
    check_prob(mu, rho.nrows())?;
    crate::coupling::empirical_rate_matrix(&rho, mu)
}

/// Stationary law `π_x` of the model kernel.
pub fn stationary(model: &SaModel, x: &[f64]) -> Result<Vec<f64>> {
    Ok(kernel::invariant_measure(model.kernel()?.as_ref(), x, 1e-12)?.probabilities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{IidKernel, MatrixKernel};
    use crate::model::{AffineUpdate, LinearDrift};
    use crate::sim::g_bar;
    use std::sync::Arc;

    fn bern(p: f64) -> SaModel {
        let k = Arc::new(IidKernel::new(vec![1.0 - p, p]).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[0.0, 1.0], 0.0).unwrap());
        SaModel::finite("bern", k, g, vec![0.0], 0).unwrap()
    }

    #[test]
    fn rank_deficient_increments() {
        let k = Arc::new(MatrixKernel::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2]]).unwrap());
        let line = Arc::new(AffineUpdate::new(vec![vec![0.0, 1.0], vec![1.0, 2.0], vec![2.0, 3.0]], 0.0).unwrap());
        let flat = SaModel::finite("line", k.clone(), line, vec![0.0, 0.0], 0).unwrap();
        let scalar = SaModel::finite("scalar", k, Arc::new(AffineUpdate::scalar(&[0.0, 1.0, 2.0], 0.0).unwrap()), vec![0.0], 0)
            .unwrap();
        let ev = RateEval::new(&flat, &[0.0, 0.0]).unwrap();
        assert_eq!(ev.increment_span().len(), 1);
        for b in [0.3, 0.9, 1.5] {
            let l = ev.local_rate(&[b, b + 1.0]).unwrap().value.finite().unwrap();
            let l1 = local_rate(&scalar, &[0.0], &[b]).unwrap().finite().unwrap();
            let oracle = crate::coupling::local_rate_oracle(&flat, &[0.0, 0.0], &[b, b + 1.0]).unwrap().finite().unwrap();
            assert!((l - l1).abs() < 1e-9 && (l - oracle).abs() < 1e-6, "{l} {l1} {oracle}");
        }
        assert_eq!(ev.local_rate(&[0.9, 1.95]).unwrap().value, Extended::PosInfinity);
    }

    #[test]
    fn perturbation_hessian_matches_finite_differences() {
        let k = Arc::new(MatrixKernel::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2]]).unwrap());
        let upd = Arc::new(AffineUpdate::new(vec![vec![0.0, 1.0], vec![1.0, -0.5], vec![2.0, 3.0]], 0.0).unwrap());
        let m = SaModel::finite("plane", k, upd, vec![0.0, 0.0], 0).unwrap();
        let models = [(m, vec![0.0, 0.0]), (random_model(7, 5), vec![0.0])];
        for (model, x) in &models {
            let ev = RateEval::new(model, x).unwrap();
            let Inner::Finite { rho, g } = &ev.inner else { unreachable!() };
            let basis = ev.increment_span();
            for coef in [vec![0.0; basis.len()], vec![0.7; basis.len()], vec![-1.3; basis.len()]] {
                let alpha: Vec<f64> = (0..ev.dim()).map(|i| coef.iter().zip(&basis).map(|(c, q)| c * q[i]).sum()).collect();
                let exact = ev.perturbation_hessian(rho, g, &alpha, &basis).unwrap().unwrap();
                let fd = ev.fd_hessian(&coef, &alpha, &basis).unwrap();
                for (a, b) in exact.iter().zip(fd.iter()) {
                    assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{exact} {fd}");
                }
            }
        }
    }

    fn two_state() -> SaModel {
        let k = Arc::new(MatrixKernel::two_state(0.3, 0.6).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[0.0, 1.0], 0.0).unwrap());
        SaModel::finite("two", k, g, vec![0.0], 0).unwrap()
    }

    #[test]
    fn relative_entropy_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(relative_entropy(&p, &p).unwrap(), Extended::Finite(0.0));
        let v = relative_entropy(&[1.0, 0.0], &[0.5, 0.5]).unwrap().finite().unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert_eq!(relative_entropy(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), Extended::PosInfinity);
        assert!(relative_entropy(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn hamiltonian_examples() {
        let m = two_state();
        assert!(hamiltonian(&m, &[0.0], &[0.0]).unwrap().abs() < 1e-12);
        let e = 1f64.exp();
        let tr = 0.7 + 0.4 * e;
        let det = 0.7 * 0.4 * e - 0.3 * 0.6 * e;
        let lp = (tr + (tr * tr - 4.0 * det).sqrt()) / 2.0;
        assert!((hamiltonian(&m, &[0.0], &[1.0]).unwrap() - lp.ln()).abs() < 1e-12);
        let q = [0.2, 0.5, 0.3];
        let k = Arc::new(IidKernel::new(q.to_vec()).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[-1.0, 0.5, 2.0], 0.0).unwrap());
        let iid = SaModel::finite("iid", k, g, vec![0.0], 0).unwrap();
        let a = 0.7;
        let expect = (0.2 * (-a as f64).exp() + 0.5 * (0.5 * a as f64).exp() + 0.3 * (2.0 * a as f64).exp()).ln();
        assert!((hamiltonian(&iid, &[0.0], &[a]).unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn gradient_examples() {
        let m = two_state();
        let g0 = hamiltonian_grad(&m, &[0.0], &[0.0]).unwrap();
        assert!((g0[0] - g_bar(&m, &[0.0]).unwrap()[0]).abs() < 1e-10);
        let p = 0.3;
        let b = bern(p);
        for a in [-2.0f64, 0.0, 0.4, 3.0] {
            let got = hamiltonian_grad(&b, &[0.0], &[a]).unwrap()[0];
            let expect = p * a.exp() / (1.0 - p + p * a.exp());
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_refuses_reducible() {
        let k = Arc::new(MatrixKernel::new(ndarray::array![[1.0, 0.0], [0.0, 1.0]]).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[0.0, 1.0], 0.0).unwrap());
        let m = SaModel::finite("red", k, g, vec![0.0], 0).unwrap();
        assert!(matches!(hamiltonian(&m, &[0.0], &[1.0]), Err(Error::Kernel(_))));
    }

    #[test]
    fn slow_mixing_chain_converges() {
        let k = Arc::new(MatrixKernel::two_state(1e-4, 2e-4).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[0.0, 1.0], 0.0).unwrap());
        let m = SaModel::finite("slow", k, g, vec![0.0], 0).unwrap();
        let ev = RateEval::new(&m, &[0.0]).unwrap();
        let h = ev.hamiltonian(&[0.5]).unwrap();
        let (a, b, e) = (1e-4f64, 2e-4f64, 0.5f64.exp());
        let tr = (1.0 - a) + (1.0 - b) * e;
        let det = (1.0 - a) * (1.0 - b) * e - a * b * e;
        let lp = (tr + (tr * tr - 4.0 * det).sqrt()) / 2.0;
        assert!((h - lp.ln()).abs() < 1e-11);
    }

    #[test]
    fn local_rate_examples() {
        let b = bern(0.5);
        let l = local_rate(&b, &[0.0], &[0.75]).unwrap().finite().unwrap();
        let kl = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((l - kl).abs() < 1e-10);
        assert!((l - 0.130812).abs() < 1e-6);
        assert_eq!(local_rate(&b, &[0.0], &[1.2]).unwrap(), Extended::PosInfinity);
        assert_eq!(local_rate(&b, &[0.0], &[-0.01]).unwrap(), Extended::PosInfinity);
        let at = RateEval::new(&b, &[0.0]).unwrap().local_rate(&[0.5]).unwrap();
        assert!(at.value.finite().unwrap().abs() < 1e-14);
        assert!(at.alpha[0].abs() < 1e-10);
        // boundary of the feasible interval: L = log 2
        let edge = local_rate(&b, &[0.0], &[1.0]).unwrap().finite().unwrap();
        assert!((edge - 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn gaussian_closed_form() {
        let drift = Arc::new(LinearDrift { offset: vec![1.0, 0.0], relax: 0.5 });
        let m = SaModel::gaussian("g", drift, 2.0, vec![0.0, 0.0]).unwrap();
        assert_eq!(hamiltonian(&m, &[1.0, 1.0], &[0.0, 0.0]).unwrap(), 0.0);
        let l = local_rate(&m, &[0.0, 0.0], &[1.0, 2.0]).unwrap().finite().unwrap();
        assert!((l - 4.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn time_dependent_hamiltonian() {
        let m = two_state();
        let poly = StepSchedule::polynomial(0.5).unwrap();
        let h1 = time_dep_hamiltonian(&m, &poly, 1.0, 0.3, &[0.0], &[0.8]).unwrap();
        assert!((h1 - hamiltonian(&m, &[0.0], &[0.8]).unwrap()).abs() < 1e-15);
        let harm = StepSchedule::harmonic();
        let e1 = std::f64::consts::E - 1.0;
        let h0 = time_dep_hamiltonian(&m, &harm, 1.0, 0.0, &[0.0], &[0.8]).unwrap();
        assert!((h0 - hamiltonian(&m, &[0.0], &[0.8 * e1]).unwrap() / e1).abs() < 1e-14);
        assert_eq!(time_dep_hamiltonian(&m, &harm, 1.0, 0.5, &[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn dv_examples() {
        let m = two_state();
        let pi = stationary(&m, &[0.0]).unwrap();
        assert!(dv_rate(&m, &[0.0], &pi).unwrap().abs() < 1e-8);
        let q = vec![0.2, 0.5, 0.3];
        let k = Arc::new(IidKernel::new(q.clone()).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&[0.0, 1.0, 2.0], 0.0).unwrap());
        let iid = SaModel::finite("iid", k, g, vec![0.0], 0).unwrap();
        let mu = [0.6, 0.1, 0.3];
        let r = relative_entropy(&mu, &q).unwrap().finite().unwrap();
        assert!((dv_rate(&iid, &[0.0], &mu).unwrap() - r).abs() < 1e-9);
    }

    fn random_model(seed: u64, s: usize) -> SaModel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..s)
            .map(|_| {
                let r: Vec<f64> = (0..s).map(|_| rng.random::<f64>() + 0.05).collect();
                let t: f64 = r.iter().sum();
                r.into_iter().map(|v| v / t).collect()
            })
            .collect();
        let vals: Vec<f64> = (0..s).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let k = Arc::new(MatrixKernel::from_rows(&rows).unwrap());
        let g = Arc::new(AffineUpdate::scalar(&vals, 0.0).unwrap());
        SaModel::finite("rand", k, g, vec![0.0], 0).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn grad_matches_central_differences(seed in 0u64..300, a in -3.0f64..3.0) {
            let m = random_model(seed, 4);
            let ev = RateEval::new(&m, &[0.0]).unwrap();
            let g = ev.hamiltonian_grad(&[a]).unwrap()[0];
            let h = 1e-5;
            let fd = (ev.hamiltonian(&[a + h]).unwrap() - ev.hamiltonian(&[a - h]).unwrap()) / (2.0 * h);
            proptest::prop_assert!((g - fd).abs() <= 1e-6);
        }

        #[test]
        fn hamiltonian_convex(seed in 0u64..300, a1 in -4.0f64..4.0, a2 in -4.0f64..4.0, th in 0.01f64..0.99) {
            let ev = RateEval::new(&random_model(seed, 5), &[0.0]).unwrap();
            let lhs = ev.hamiltonian(&[th * a1 + (1.0 - th) * a2]).unwrap();
            let rhs = th * ev.hamiltonian(&[a1]).unwrap() + (1.0 - th) * ev.hamiltonian(&[a2]).unwrap();
            proptest::prop_assert!(lhs <= rhs + 1e-10);
        }

        #[test]
        fn local_rate_convex_nonnegative(seed in 0u64..200, u1 in 0.05f64..0.95, u2 in 0.05f64..0.95, th in 0.01f64..0.99) {
            let m = random_model(seed, 4);
            let table = m.update_table(&[0.0]).unwrap();
            let (lo, hi) = table.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let b1 = lo + u1 * (hi - lo);
            let b2 = lo + u2 * (hi - lo);
            let ev = RateEval::new(&m, &[0.0]).unwrap();
            let l = |b: f64| ev.local_rate(&[b]).unwrap().value.finite().unwrap();
            let (l1, l2) = (l(b1), l(b2));
            proptest::prop_assert!(l1 >= -1e-12 && l2 >= -1e-12);
            proptest::prop_assert!(l(th * b1 + (1.0 - th) * b2) <= th * l1 + (1.0 - th) * l2 + 1e-9);
        }
    }

    #[test]
    fn local_rate_zero_at_mean() {
        for seed in 0..10 {
            let m = random_model(seed, 5);
            let gb = g_bar(&m, &[0.0]).unwrap();
            let ev = RateEval::new(&m, &[0.0]).unwrap();
            assert!(ev.local_rate(&gb).unwrap().value.finite().unwrap() < 1e-12);
            // golden-section minimizer of L lands on ḡ
            let (mut a, mut b) = (gb[0] - 0.5, gb[0] + 0.5);
            let r = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..80 {
                let c = b - r * (b - a);
                let d = a + r * (b - a);
                let fc = ev.local_rate(&[c]).unwrap().value.to_f64();
                let fd = ev.local_rate(&[d]).unwrap().value.to_f64();
                if fc < fd {
                    b = d;
                } else {
                    a = c;
                }
            }
            assert!(((a + b) / 2.0 - gb[0]).abs() < 1e-6);
        }
    }
}
