//! Relative-entropy programs over couplings, solved directly.
//!
//! `L(x, β) = inf R(γ ‖ μ⊗ρ)` over `γ` on `supp ρ` with equal marginals
//! `μ` and `Σ_z g(z) μ(z) = β`, and `J(μ)` with both marginals pinned. Both
//! are convex with linear constraints; they are solved by infeasible-start
//! equality-constrained Newton on the KKT system. Nothing here touches the
//! Perron machinery, so the two routes to `L` check each other.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::kernel::{self, support_structure};
use crate::linalg;
use crate::model::SaModel;
use crate::rate::Extended;

/// Row tolerance for linear dependence during constraint reduction.
const DEP_TOL: f64 = 1e-10;

/// A coupling together with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSolution {
    pub value: Extended,
    /// `γ(y, z)`, zero off the variable support. Empty when infeasible.
    pub coupling: Option<Array2<f64>>,
    pub iterations: usize,
}

/// Orthonormalized, consistent equality constraints `Q γ = c`.
struct Constraints {
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
}

/// Reduce `A γ = b` to independent rows by modified Gram-Schmidt carried
/// on the right-hand side; `None` when a dependent row is inconsistent.
fn reduce(rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Option<Constraints> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    for (mut a, mut b) in rows.into_iter().zip(rhs) {
        let scale = linalg::norm2(&a).max(1e-300);
        for _ in 0..2 {
            for (qk, ck) in q.iter().zip(&c) {
                let p = linalg::dot(qk, &a);
                a.iter_mut().zip(qk).for_each(|(ai, qi)| *ai -= p * qi);
                b -= p * ck;
            }
        }
        let n = linalg::norm2(&a);
        if n <= DEP_TOL * scale {
            if b.abs() > 1e-9 * (1.0 + scale) {
                return None;
            }
            continue;
        }
        a.iter_mut().for_each(|ai| *ai /= n);
        q.push(a);
        c.push(b / n);
    }
    Some(Constraints { q, c })
}

enum Outcome {
    Solved { x: Vec<f64>, iterations: usize },
    Infeasible,
    Stalled { iterations: usize, residual: f64 },
}

/// Infeasible-start Newton for `min f(x)` s.t. `Q x = c`, `x > 0`.
fn newton_kkt(
    cons: &Constraints,
    x0: Vec<f64>,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    hess: &dyn Fn(&[f64]) -> Array2<f64>,
) -> Outcome {
    let n = x0.len();
    let m = cons.q.len();
    let mut x = x0;
    let mut nu = vec![0.0; m];
    let residual = |x: &[f64], nu: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut rd = grad(x);
        for (qk, nk) in cons.q.iter().zip(nu) {
            rd.iter_mut().zip(qk).for_each(|(r, q)| *r += nk * q);
        }
        let rp: Vec<f64> = cons.q.iter().zip(&cons.c).map(|(qk, ck)| linalg::dot(qk, x) - ck).collect();
        (rd, rp)
    };
    let norm = |rd: &[f64], rp: &[f64]| (linalg::dot(rd, rd) + linalg::dot(rp, rp)).sqrt();
    let max_iter = 400;
    let mut stuck = 0;
    for it in 0..max_iter {
        let (rd, rp) = residual(&x, &nu);
        let r = norm(&rd, &rp);
        let primal = linalg::norm2(&rp);
        if primal <= 1e-13 && linalg::norm2(&rd) <= 1e-11 {
            return Outcome::Solved { x, iterations: it };
        }
        let h = hess(&x);
        let mut kkt = Array2::zeros((n + m, n + m));
        kkt.slice_mut(ndarray::s![..n, ..n]).assign(&h);
        for (k, qk) in cons.q.iter().enumerate() {
            for (j, &v) in qk.iter().enumerate() {
                kkt[[n + k, j]] = v;
                kkt[[j, n + k]] = v;
            }
        }
        let mut rhs = Array1::zeros(n + m);
        for j in 0..n {
            rhs[j] = -rd[j];
        }
        for k in 0..m {
            rhs[n + k] = -rp[k];
        }
        if linalg::solve_in_place(&mut kkt, &mut rhs).is_err() {
            return Outcome::Stalled { iterations: it, residual: r };
        }
        let dx = &rhs.as_slice().expect("contiguous")[..n];
        let dnu = &rhs.as_slice().expect("contiguous")[n..];
        let mut t = 1.0f64;
        while x.iter().zip(dx).any(|(a, d)| a + t * d <= 0.0) {
            t *= 0.5;
            if t < 1e-20 {
                break;
            }
        }
        let mut accepted = false;
        while t >= 1e-20 {
            let xt: Vec<f64> = x.iter().zip(dx).map(|(a, d)| a + t * d).collect();
            let nut: Vec<f64> = nu.iter().zip(dnu).map(|(a, d)| a + t * d).collect();
            let (rdt, rpt) = residual(&xt, &nut);
            let rt = norm(&rdt, &rpt);
            if rt.is_finite() && rt <= (1.0 - 0.01 * t) * r {
                x = xt;
                nu = nut;
                accepted = true;
                break;
            }
            // at tiny residuals floating-point noise can block the Armijo test
            if r < 1e-10 && primal < 1e-12 && rt.is_finite() && rt <= 2.0 * r {
                x = xt;
                nu = nut;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || t < 1e-8 {
            stuck += 1;
        } else {
            stuck = 0;
        }
        if !accepted || stuck > 30 {
            let (rd, rp) = residual(&x, &nu);
            if linalg::norm2(&rp) > 1e-9 {
                return Outcome::Infeasible;
            }
            if linalg::norm2(&rd) <= 1e-8 {
                return Outcome::Solved { x, iterations: it };
            }
            return Outcome::Stalled { iterations: it, residual: norm(&rd, &rp) };
        }
    }
    let (rd, rp) = residual(&x, &nu);
    if linalg::norm2(&rp) > 1e-9 {
        return Outcome::Infeasible;
    }
    Outcome::Stalled { iterations: max_iter, residual: norm(&rd, &rp) }
}

/// Coupling-program value of `L(x, β)`.
pub fn local_rate_oracle(model: &SaModel, x: &[f64], beta: &[f64]) -> Result<Extended> {
    Ok(local_rate_coupling(&model.kernel_matrix(x)?, &model.update_table(x)?, beta)?.value)
}

/// Solve the `L` program for kernel `rho` and update table `g` (row `z` is `g(z)`).
pub fn local_rate_coupling(rho: &Array2<f64>, g: &Array2<f64>, beta: &[f64]) -> Result<CouplingSolution> {
    let s = rho.nrows();
    let d = g.ncols();
    if g.nrows() != s || beta.len() != d {
        return Err(Error::InvalidInput("update table and beta must match the kernel".into()));
    }
    support_structure(rho).into_result()?;
    let infeasible = || CouplingSolution { value: Extended::PosInfinity, coupling: None, iterations: 0 };
    for i in 0..d {
        let (lo, hi) = g.column(i).iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if beta[i] < lo - 1e-12 || beta[i] > hi + 1e-12 {
            return Ok(infeasible());
        }
    }
    let pairs: Vec<(usize, usize)> = rho.indexed_iter().filter(|(_, &v)| v > 0.0).map(|(p, _)| p).collect();
    let n = pairs.len();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for st in 0..s {
        rows.push(pairs.iter().map(|&(y, z)| (y == st) as i32 as f64 - (z == st) as i32 as f64).collect());
        rhs.push(0.0);
    }
    rows.push(vec![1.0; n]);
    rhs.push(1.0);
    for (i, &b) in beta.iter().enumerate() {
        rows.push(pairs.iter().map(|&(_, z)| g[[z, i]]).collect());
        rhs.push(b);
    }
    let Some(cons) = reduce(rows, rhs) else {
        return Ok(infeasible());
    };
    let pi = kernel::stationary_distribution(rho, 1e-13)?.probabilities;
    let x0: Vec<f64> = pairs.iter().map(|&(y, z)| (pi[y] * rho[[y, z]]).max(1e-300)).collect();
    let row_mass = |x: &[f64]| -> Vec<f64> {
        let mut mu = vec![0.0; s];
        for (&(y, _), &v) in pairs.iter().zip(x) {
            mu[y] += v;
        }
        mu
    };
    let f = |x: &[f64]| -> f64 {
        let mu = row_mass(x);
        pairs.iter().zip(x).map(|(&(y, z), &v)| if v > 0.0 { v * (v / (mu[y] * rho[[y, z]])).ln() } else { 0.0 }).sum()
    };
    let grad = |x: &[f64]| -> Vec<f64> {
        let mu = row_mass(x);
        pairs.iter().zip(x).map(|(&(y, z), &v)| (v / (mu[y] * rho[[y, z]])).ln()).collect()
    };
    let hess = |x: &[f64]| -> Array2<f64> {
        let mu = row_mass(x);
        let mut h = Array2::zeros((n, n));
        for (a, &(ya, _)) in pairs.iter().enumerate() {
            h[[a, a]] += 1.0 / x[a];
            for (b, &(yb, _)) in pairs.iter().enumerate() {
                if ya == yb {
                    h[[a, b]] -= 1.0 / mu[ya];
                }
            }
        }
        h
    };
    match newton_kkt(&cons, x0, &grad, &hess) {
        Outcome::Solved { x, iterations } => {
            let mut gam = Array2::zeros((s, s));
            for (&(y, z), &v) in pairs.iter().zip(&x) {
                gam[[y, z]] = v;
            }
            Ok(CouplingSolution { value: Extended::Finite(f(&x).max(0.0)), coupling: Some(gam), iterations })
        }
        Outcome::Infeasible => Ok(infeasible()),
        Outcome::Stalled { iterations, residual } => {
            Err(Error::NonConvergence { what: "coupling program", iterations, residual })
        }
    }
}

/// `J(μ) = inf_{γ ∈ 𝒜(μ)} R(γ ‖ μ⊗ρ)`.
pub fn empirical_rate_matrix(rho: &Array2<f64>, mu: &[f64]) -> Result<Extended> {
    Ok(empirical_rate_coupling(rho, mu)?.value)
}

pub fn empirical_rate_coupling(rho: &Array2<f64>, mu: &[f64]) -> Result<CouplingSolution> {
    let s = rho.nrows();
    if mu.len() != s {
        return Err(Error::InvalidInput("measure and kernel sizes differ".into()));
    }
    let infeasible = || CouplingSolution { value: Extended::PosInfinity, coupling: None, iterations: 0 };
    let pairs: Vec<(usize, usize)> =
        rho.indexed_iter().filter(|&((y, z), &v)| v > 0.0 && mu[y] > 0.0 && mu[z] > 0.0).map(|(p, _)| p).collect();
    let support: Vec<usize> = (0..s).filter(|&y| mu[y] > 0.0).collect();
    for &y in &support {
        if !pairs.iter().any(|&(a, _)| a == y) || !pairs.iter().any(|&(_, b)| b == y) {
            return Ok(infeasible());
        }
    }
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for &st in &support {
        rows.push(pairs.iter().map(|&(y, _)| (y == st) as i32 as f64).collect());
        rhs.push(mu[st]);
        rows.push(pairs.iter().map(|&(_, z)| (z == st) as i32 as f64).collect());
        rhs.push(mu[st]);
    }
    let Some(cons) = reduce(rows, rhs) else {
        return Ok(infeasible());
    };
    let x0: Vec<f64> = pairs
        .iter()
        .map(|&(y, z)| {
            let tot: f64 = support.iter().map(|&w| rho[[y, w]]).sum();
            mu[y] * rho[[y, z]] / tot
        })
        .collect();
    let f = |x: &[f64]| -> f64 {
        pairs.iter().zip(x).map(|(&(y, z), &v)| if v > 0.0 { v * (v / (mu[y] * rho[[y, z]])).ln() } else { 0.0 }).sum()
    };
    let grad = |x: &[f64]| -> Vec<f64> {
        pairs.iter().zip(x).map(|(&(y, z), &v)| (v / (mu[y] * rho[[y, z]])).ln() + 1.0).collect()
    };
    let hess = |x: &[f64]| -> Array2<f64> { Array2::from_diag(&Array1::from_iter(x.iter().map(|v| 1.0 / v))) };
    match newton_kkt(&cons, x0, &grad, &hess) {
        Outcome::Solved { x, iterations } => {
            let mut gam = Array2::zeros((s, s));
            for (&(y, z), &v) in pairs.iter().zip(&x) {
                gam[[y, z]] = v;
            }
            Ok(CouplingSolution { value: Extended::Finite(f(&x).max(0.0)), coupling: Some(gam), iterations })
        }
        Outcome::Infeasible => Ok(infeasible()),
        Outcome::Stalled { iterations, residual } => {
            Err(Error::NonConvergence { what: "coupling program", iterations, residual })
        }
    }
}
