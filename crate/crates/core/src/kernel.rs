//! State-dependent transition kernels on finite noise spaces.
//!
//! A kernel maps a parameter point `x` to a row-stochastic matrix `ρ_x`
//! (rows indexed by the current noise point, columns by the next one). The
//! reference measure is counting measure, so densities are matrix entries.
//!
//! Also here: invariant measures, matrix powers, the one-step log-MGF and
//! the grid audit of the standing assumptions on `g` and `ρ`.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, RngCore};
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::model::SaModel;

/// Tolerance on row sums when a kernel is constructed.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Dense fallback for the invariant-measure solve is used up to this size.
pub const DENSE_FALLBACK_MAX: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("empty noise space")]
    Empty,
    #[error("row {row} is not a probability vector (sum {sum}, min {min})")]
    NotStochastic { row: usize, sum: f64, min: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("chain is reducible: state {to} is not reachable from state {from}")]
    Reducible { from: usize, to: usize },
    #[error("chain is periodic with period {0}")]
    Periodic(usize),
    #[error("invariant measure did not converge (residual {residual:e} after {iterations} iterations)")]
    NonConvergence { iterations: usize, residual: f64 },
}

/// The noise space `{0, …, S−1}` with optional labels and coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteNoiseSpace {
    size: usize,
    labels: Option<Vec<String>>,
    coords: Option<Vec<Vec<f64>>>,
}

impl FiniteNoiseSpace {
    pub fn new(size: usize) -> Result<Self, KernelError> {
        if size == 0 {
            return Err(KernelError::Empty);
        }
        Ok(Self { size, labels: None, coords: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, KernelError> {
        if labels.len() != self.size {
            return Err(KernelError::Shape(format!("{} labels for {} points", labels.len(), self.size)));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Euclidean embedding of the noise points (used by the exponential
    /// moment audit). Defaults to the point index as a scalar.
    pub fn with_coords(mut self, coords: Vec<Vec<f64>>) -> Result<Self, KernelError> {
        if coords.len() != self.size {
            return Err(KernelError::Shape(format!("{} coordinates for {} points", coords.len(), self.size)));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn label(&self, z: usize) -> String {
        match &self.labels {
            Some(l) => l[z].clone(),
            None => z.to_string(),
        }
    }

    pub fn coord(&self, z: usize) -> Vec<f64> {
        match &self.coords {
            Some(c) => c[z].clone(),
            None => vec![z as f64],
        }
    }
}

/// `x ↦ ρ_x`, deterministic in `x`.
pub trait StateKernel: Send + Sync + fmt::Debug {
    fn size(&self) -> usize;

    /// Write `ρ_x(y, ·)` into `row`.
    fn fill_row(&self, x: &[f64], y: usize, row: &mut [f64]);

    fn matrix(&self, x: &[f64]) -> Array2<f64> {
        let s = self.size();
        let mut m = Array2::zeros((s, s));
        let mut row = vec![0.0; s];
        for y in 0..s {
            self.fill_row(x, y, &mut row);
            m.row_mut(y).iter_mut().zip(&row).for_each(|(a, b)| *a = *b);
        }
        m
    }

    /// Draw the next noise point. The default inverts the CDF of the row.
    fn sample_next(&self, x: &[f64], y: usize, rng: &mut dyn RngCore, scratch: &mut Vec<f64>) -> usize {
        scratch.resize(self.size(), 0.0);
        self.fill_row(x, y, scratch);
        inverse_cdf(scratch, rng.random::<f64>())
    }
}

/// Smallest index whose cumulative weight exceeds `u · total`.
pub fn inverse_cdf(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

fn validate_rows(m: &mut Array2<f64>) -> Result<(), KernelError> {
    let (r, c) = m.dim();
    if r == 0 {
        return Err(KernelError::Empty);
    }
    if r != c {
        return Err(KernelError::Shape(format!("kernel matrix is {r}x{c}")));
    }
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min >= 0.0) || !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(KernelError::NotStochastic { row: i, sum, min });
        }
        row.mapv_inplace(|v| v / sum);
    }
    Ok(())
}

fn validate_prob(q: &mut [f64]) -> Result<(), KernelError> {
    if q.is_empty() {
        return Err(KernelError::Empty);
    }
    let sum: f64 = q.iter().sum();
    let min = q.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min >= 0.0) || !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(KernelError::NotStochastic { row: 0, sum, min });
    }
    q.iter_mut().for_each(|v| *v /= sum);
    Ok(())
}

/// Every row equal to `q`, independent of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct IidKernel {
    q: Vec<f64>,
}

impl IidKernel {
    pub fn new(mut q: Vec<f64>) -> Result<Self, KernelError> {
        validate_prob(&mut q)?;
        Ok(Self { q })
    }

    pub fn uniform(size: usize) -> Result<Self, KernelError> {
        if size == 0 {
            return Err(KernelError::Empty);
        }
        Ok(Self { q: vec![1.0 / size as f64; size] })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.q
    }
}

impl StateKernel for IidKernel {
    fn size(&self) -> usize {
        self.q.len()
    }

    fn fill_row(&self, _x: &[f64], _y: usize, row: &mut [f64]) {
        row.copy_from_slice(&self.q);
    }
}

/// A fixed matrix, independent of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixKernel {
    m: Array2<f64>,
}

impl MatrixKernel {
    pub fn new(mut m: Array2<f64>) -> Result<Self, KernelError> {
        validate_rows(&mut m)?;
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, KernelError> {
        Self::new(rows_to_matrix(rows)?)
    }

    /// `[[1−a, a], [b, 1−b]]`.
    pub fn two_state(a: f64, b: f64) -> Result<Self, KernelError> {
        Self::new(ndarray::array![[1.0 - a, a], [b, 1.0 - b]])
    }

    pub fn as_matrix(&self) -> &Array2<f64> {
        &self.m
    }
}

impl StateKernel for MatrixKernel {
    fn size(&self) -> usize {
        self.m.nrows()
    }

    fn fill_row(&self, _x: &[f64], y: usize, row: &mut [f64]) {
        row.iter_mut().zip(self.m.row(y)).for_each(|(a, b)| *a = *b);
    }

    fn matrix(&self, _x: &[f64]) -> Array2<f64> {
        self.m.clone()
    }
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>, KernelError> {
    let n = rows.len();
    if n == 0 {
        return Err(KernelError::Empty);
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(KernelError::Shape("kernel rows must form a square matrix".into()));
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]))
}

/// Matrices given at grid points of a scalar parameter (first coordinate of
/// `x`), linearly interpolated between grid points and held constant
/// outside the grid. Convex combinations of stochastic matrices are
/// stochastic, so every `ρ_x` is valid and `x ↦ ρ_x` is continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedKernel {
    grid: Vec<f64>,
    mats: Vec<Array2<f64>>,
}

impl InterpolatedKernel {
    pub fn new(grid: Vec<f64>, mats: Vec<Array2<f64>>) -> Result<Self, KernelError> {
        if grid.is_empty() || grid.len() != mats.len() {
            return Err(KernelError::Shape(format!("{} grid points for {} matrices", grid.len(), mats.len())));
        }
        if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KernelError::Shape("grid must be finite and strictly increasing".into()));
        }
        let size = mats[0].nrows();
        let mut mats = mats;
        for m in &mut mats {
            if m.dim() != (size, size) {
                return Err(KernelError::Shape("all grid matrices must have the same size".into()));
            }
            validate_rows(m)?;
        }
        Ok(Self { grid, mats })
    }

    fn locate(&self, x: f64) -> (usize, usize, f64) {
        let last = self.grid.len() - 1;
        if !(x > self.grid[0]) {
            return (0, 0, 0.0);
        }
        if x >= self.grid[last] {
            return (last, last, 0.0);
        }
        let hi = self.grid.partition_point(|&g| g <= x);
        let lo = hi - 1;
        (lo, hi, (x - self.grid[lo]) / (self.grid[hi] - self.grid[lo]))
    }
}

impl StateKernel for InterpolatedKernel {
    fn size(&self) -> usize {
        self.mats[0].nrows()
    }

    fn fill_row(&self, x: &[f64], y: usize, row: &mut [f64]) {
        let (lo, hi, w) = self.locate(x.first().copied().unwrap_or(0.0));
        for (j, r) in row.iter_mut().enumerate() {
            *r = (1.0 - w) * self.mats[lo][[y, j]] + w * self.mats[hi][[y, j]];
        }
    }
}

type RowFn = dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync;

/// Kernel backed by a closure filling `ρ_x(y, ·)`. The closure is trusted to
/// produce probability rows; [`check_assumptions`] audits that on a grid.
#[derive(Clone)]
pub struct FnKernel {
    size: usize,
    f: Arc<RowFn>,
}

impl FnKernel {
    pub fn new(size: usize, f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { size, f: Arc::new(f) }
    }
}

impl fmt::Debug for FnKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnKernel").field("size", &self.size).finish_non_exhaustive()
    }
}

impl StateKernel for FnKernel {
    fn size(&self) -> usize {
        self.size
    }

    fn fill_row(&self, x: &[f64], y: usize, row: &mut [f64]) {
        (self.f)(x, y, row)
    }
}

/// Support-graph structure of a nonnegative square matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportStructure {
    pub irreducible: bool,
    /// A pair `(from, to)` with `to` unreachable from `from`, if reducible.
    pub unreachable: Option<(usize, usize)>,
    /// Period of the chain (gcd of cycle lengths); meaningful when irreducible.
    pub period: usize,
}

impl SupportStructure {
    pub fn is_primitive(&self) -> bool {
        self.irreducible && self.period == 1
    }

    pub fn into_result(self) -> Result<(), KernelError> {
        if let Some((from, to)) = self.unreachable {
            return Err(KernelError::Reducible { from, to });
        }
        if self.period != 1 {
            return Err(KernelError::Periodic(self.period));
        }
        Ok(())
    }
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].expect("queued nodes have levels");
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Irreducibility by forward/backward reachability from state 0, and the
/// period as the gcd of `level(u) + 1 − level(v)` over all edges `u → v`
/// of a BFS layering. Both are exact on finite graphs.
pub fn support_structure(m: &Array2<f64>) -> SupportStructure {
    let s = m.nrows();
    let mut fwd = vec![Vec::new(); s];
    let mut bwd = vec![Vec::new(); s];
    for ((i, j), &v) in m.indexed_iter() {
        if v > 0.0 {
            fwd[i].push(j);
            bwd[j].push(i);
        }
    }
    let down = bfs(&fwd, 0);
    if let Some(to) = down.iter().position(Option::is_none) {
        return SupportStructure { irreducible: false, unreachable: Some((0, to)), period: 0 };
    }
    let up = bfs(&bwd, 0);
    if let Some(from) = up.iter().position(Option::is_none) {
        return SupportStructure { irreducible: false, unreachable: Some((from, 0)), period: 0 };
    }
    let level: Vec<usize> = down.into_iter().map(|l| l.expect("all reachable")).collect();
    let mut period = 0;
    for (u, targets) in fwd.iter().enumerate() {
        for &v in targets {
            period = gcd(period, (level[u] + 1).abs_diff(level[v]));
        }
    }
    SupportStructure { irreducible: true, unreachable: None, period }
}

/// Smallest `k` with `m^k` entrywise positive, or `None` if no power up to
/// Wielandt's bound `(S−1)² + 1` is positive.
pub fn primitivity_exponent(m: &Array2<f64>) -> Option<usize> {
    let s = m.nrows();
    let base: Vec<Vec<bool>> = m.rows().into_iter().map(|r| r.iter().map(|&v| v > 0.0).collect()).collect();
    let mut reach = base.clone();
    let bound = (s - 1) * (s - 1) + 1;
    for k in 1..=bound {
        if reach.iter().all(|r| r.iter().all(|&b| b)) {
            return Some(k);
        }
        let mut next = vec![vec![false; s]; s];
        for i in 0..s {
            for l in 0..s {
                if reach[i][l] {
                    for j in 0..s {
                        next[i][j] |= base[l][j];
                    }
                }
            }
        }
        reach = next;
    }
    None
}

/// Probability vector `π` with `πρ = π`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantMeasure {
    pub probabilities: Vec<f64>,
    /// `‖πρ − π‖₁`
    pub residual: f64,
}

/// Invariant measure of a primitive stochastic matrix: power iteration,
/// with a dense solve of `π(ρ − I) = 0, Σπ = 1` as fallback for `S ≤ 64`.
pub fn stationary_distribution(m: &Array2<f64>, tol: f64) -> Result<InvariantMeasure, KernelError> {
    support_structure(m).into_result()?;
    let s = m.nrows();
    let residual = |p: &[f64]| -> f64 {
        linalg::vec_mat(p, m.view()).iter().zip(p).map(|(a, b)| (a - b).abs()).sum()
    };
    let max_iter = 100_000;
    let mut p = vec![1.0 / s as f64; s];
    let mut next = linalg::vec_mat(&p, m.view());
    let mut res: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
    let mut it = 0;
    while res > 0.1 * tol && it < max_iter {
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        std::mem::swap(&mut p, &mut next);
        next = linalg::vec_mat(&p, m.view());
        res = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        it += 1;
    }
    if res > tol && s <= DENSE_FALLBACK_MAX {
        if let Some(q) = dense_stationary(m) {
            let r = residual(&q);
            if r < res {
                p = q;
                res = r;
            }
        }
    }
    if res > tol {
        return Err(KernelError::NonConvergence { iterations: it, residual: res });
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v = (*v / total).max(0.0));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(InvariantMeasure { residual: residual(&p), probabilities: p })
}

fn dense_stationary(m: &Array2<f64>) -> Option<Vec<f64>> {
    let s = m.nrows();
    // rows of the system are the columns of (ρ − I)ᵀ; the last is replaced by Σπ = 1
    let mut a = Array2::from_shape_fn((s, s), |(i, j)| m[[j, i]] - if i == j { 1.0 } else { 0.0 });
    a.row_mut(s - 1).fill(1.0);
    let mut b = ndarray::Array1::zeros(s);
    b[s - 1] = 1.0;
    linalg::solve_in_place(&mut a, &mut b).ok()?;
    Some(b.to_vec())
}

/// `π_x` for the model's kernel at `x`.
pub fn invariant_measure(kernel: &dyn StateKernel, x: &[f64], tol: f64) -> Result<InvariantMeasure, KernelError> {
    stationary_distribution(&kernel.matrix(x), tol)
}

/// `ρ_x^k` by repeated squaring.
pub fn k_step(kernel: &dyn StateKernel, x: &[f64], k: usize) -> Result<Array2<f64>, KernelError> {
    if k == 0 {
        return Err(KernelError::Shape("k must be at least 1".into()));
    }
    Ok(matrix_power(&kernel.matrix(x), k))
}

pub fn matrix_power(m: &Array2<f64>, mut k: usize) -> Array2<f64> {
    let mut base = m.clone();
    let mut acc: Option<Array2<f64>> = None;
    while k > 0 {
        if k & 1 == 1 {
            acc = Some(match acc {
                Some(a) => a.dot(&base),
                None => base.clone(),
            });
        }
        k >>= 1;
        if k > 0 {
            base = base.dot(&base);
        }
    }
    acc.expect("k >= 1")
}

/// `Λ(x, α, y) = log Σ_z e^{⟨α, g(x,z)⟩} ρ_x(y, z)`, evaluated with a max shift.
pub fn one_step_log_mgf(model: &SaModel, x: &[f64], alpha: &[f64], y: usize) -> crate::Result<f64> {
    let kernel = model.kernel()?;
    if y >= kernel.size() {
        return Err(crate::Error::InvalidInput(format!("noise point {y} out of range")));
    }
    if alpha.len() != model.dim {
        return Err(crate::Error::InvalidInput("alpha has the wrong dimension".into()));
    }
    let table = model.update_table(x)?;
    let mut row = vec![0.0; kernel.size()];
    kernel.fill_row(x, y, &mut row);
    let exps: Vec<f64> = table.rows().into_iter().map(|g| linalg::dot(alpha, g.as_slice().unwrap_or(&g.to_vec()))).collect();
    Ok(linalg::log_sum_exp_weighted(&exps, &row))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckStatus {
    Pass,
    Fail,
}

/// Where a check attained its bound or failed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_other: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub id: &'static str,
    pub status: CheckStatus,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl AssumptionCheck {
    fn pass(id: &'static str, detail: impl Into<String>, bound: Option<f64>, witness: Option<Witness>) -> Self {
        Self { id, status: CheckStatus::Pass, detail: detail.into(), bound, witness }
    }

    fn fail(id: &'static str, detail: impl Into<String>, witness: Witness) -> Self {
        Self { id, status: CheckStatus::Fail, detail: detail.into(), bound: None, witness: Some(witness) }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub schema_version: u32,
    pub model: String,
    pub grid_points: usize,
    pub checks: Vec<AssumptionCheck>,
    pub l0: Option<usize>,
    pub n0: Option<usize>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }

    pub fn check(&self, id: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Audit the standing assumptions on finite grids.
///
/// Continuity and Lipschitz conditions are audited on the grid, not proven:
/// the reported bound is the worst grid ratio. Irreducibility, aperiodicity
/// and the exponent `l₀ = n₀` are exact per grid point.
pub fn check_assumptions(model: &SaModel, x_grid: &[Vec<f64>], alpha_grid: &[Vec<f64>]) -> crate::Result<AssumptionReport> {
    if x_grid.is_empty() || alpha_grid.is_empty() {
        return Err(crate::Error::InvalidInput("assumption audit needs non-empty grids".into()));
    }
    for x in x_grid {
        model.check_point(x)?;
    }
    if alpha_grid.iter().any(|a| a.len() != model.dim) {
        return Err(crate::Error::InvalidInput("alpha grid has the wrong dimension".into()));
    }
    let kernel = model.kernel()?;
    let space = model.noise_space()?;
    let s = kernel.size();
    let mats: Vec<Array2<f64>> = x_grid.iter().map(|x| kernel.matrix(x)).collect();
    let tables: Vec<Array2<f64>> = x_grid.iter().map(|x| model.update_table(x)).collect::<crate::Result<_>>()?;
    let mut checks = Vec::new();

    // A.1: Lipschitz ratio of x ↦ g(x, z) over grid pairs.
    let mut lip = 0.0f64;
    let mut lip_w = Witness::default();
    for (i, xi) in x_grid.iter().enumerate() {
        for (j, xj) in x_grid.iter().enumerate().skip(i + 1) {
            let d = linalg::dist2(xi, xj);
            if d == 0.0 {
                continue;
            }
            for z in 0..s {
                let r = linalg::dist2(tables[i].row(z).as_slice().unwrap(), tables[j].row(z).as_slice().unwrap()) / d;
                if r > lip {
                    lip = r;
                    lip_w = Witness { x: Some(xi.clone()), x_other: Some(xj.clone()), z: Some(z), value: Some(r), ..Default::default() };
                }
            }
        }
    }
    checks.push(if lip.is_finite() {
        AssumptionCheck::pass("A.1", "Lipschitz ratio of g audited on grid", Some(lip), Some(lip_w))
    } else {
        AssumptionCheck::fail("A.1", "unbounded Lipschitz ratio on grid", lip_w)
    });

    // A.2: valid densities at every grid point and grid modulus of x ↦ η_x.
    let mut a2_fail = None;
    for (x, m) in x_grid.iter().zip(&mats) {
        for (y, row) in m.rows().into_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(min >= 0.0) || (sum - 1.0).abs() > 1e-10 {
                a2_fail.get_or_insert(Witness { x: Some(x.clone()), y: Some(y), value: Some(sum), ..Default::default() });
            }
        }
    }
    let mut modulus = 0.0f64;
    let mut mod_w = Witness::default();
    for i in 0..x_grid.len() {
        for j in i + 1..x_grid.len() {
            let d = linalg::dist2(&x_grid[i], &x_grid[j]);
            if d == 0.0 {
                continue;
            }
            for ((y, z), a) in mats[i].indexed_iter() {
                let r = (a - mats[j][[y, z]]).abs() / d;
                if r > modulus {
                    modulus = r;
                    mod_w = Witness {
                        x: Some(x_grid[i].clone()),
                        x_other: Some(x_grid[j].clone()),
                        y: Some(y),
                        z: Some(z),
                        value: Some(r),
                        ..Default::default()
                    };
                }
            }
        }
    }
    checks.push(match a2_fail {
        Some(w) => AssumptionCheck::fail("A.2", "kernel row is not a probability vector", w),
        None => AssumptionCheck::pass("A.2", "density modulus of continuity audited on grid", Some(modulus), Some(mod_w)),
    });

    // A.3 and A.6: log-MGF values on the grid.
    let mut lambda = vec![vec![vec![0.0; s]; alpha_grid.len()]; x_grid.len()];
    let mut sup_g = (f64::NEG_INFINITY, Witness::default());
    let mut sup_z = (f64::NEG_INFINITY, Witness::default());
    let coords: Vec<Vec<f64>> = (0..s).map(|z| space.coord(z)).collect();
    for (i, x) in x_grid.iter().enumerate() {
        for (a, alpha) in alpha_grid.iter().enumerate() {
            let exps: Vec<f64> = tables[i].rows().into_iter().map(|g| linalg::dot(alpha, g.as_slice().unwrap())).collect();
            let exps_z: Vec<f64> = coords.iter().map(|c| linalg::dot(alpha, c)).collect();
            for y in 0..s {
                let row = mats[i].row(y);
                let row = row.as_slice().unwrap();
                let v = linalg::log_sum_exp_weighted(&exps, row);
                lambda[i][a][y] = v;
                if !(v <= sup_g.0) {
                    sup_g = (v, Witness { x: Some(x.clone()), y: Some(y), alpha: Some(alpha.clone()), value: Some(v), ..Default::default() });
                }
                let vz = linalg::log_sum_exp_weighted(&exps_z, row);
                if !(vz <= sup_z.0) {
                    sup_z = (vz, Witness { x: Some(x.clone()), y: Some(y), alpha: Some(alpha.clone()), value: Some(vz), ..Default::default() });
                }
            }
        }
    }
    let mut a3 = 0.0f64;
    let mut a3_w = Witness::default();
    for i in 0..x_grid.len() {
        for j in 0..x_grid.len() {
            for a in 0..alpha_grid.len() {
                for b in 0..alpha_grid.len() {
                    if (i, a) >= (j, b) {
                        continue;
                    }
                    let d = linalg::dist2(&x_grid[i], &x_grid[j]) + linalg::dist2(&alpha_grid[a], &alpha_grid[b]);
                    if d == 0.0 {
                        continue;
                    }
                    for y in 0..s {
                        let r = (lambda[i][a][y] - lambda[j][b][y]).abs() / d;
                        if !(r <= a3) {
                            a3 = r;
                            a3_w = Witness {
                                x: Some(x_grid[i].clone()),
                                x_other: Some(x_grid[j].clone()),
                                y: Some(y),
                                alpha: Some(alpha_grid[a].clone()),
                                value: Some(r),
                                ..Default::default()
                            };
                        }
                    }
                }
            }
        }
    }
    checks.push(if a3.is_finite() {
        AssumptionCheck::pass("A.3", "log-MGF modulus in (x, alpha) audited on grid, uniform over y", Some(a3), Some(a3_w))
    } else {
        AssumptionCheck::fail("A.3", "log-MGF not finite on grid", a3_w)
    });

    // A.4: density ratios over grid pairs.
    let mut ratio = 1.0f64;
    let mut ratio_w = Witness::default();
    let mut a4_fail = None;
    'outer: for i in 0..x_grid.len() {
        for j in 0..x_grid.len() {
            if i == j {
                continue;
            }
            for ((y, z), &num) in mats[i].indexed_iter() {
                let den = mats[j][[y, z]];
                if num == 0.0 {
                    continue;
                }
                if den == 0.0 {
                    a4_fail = Some(Witness {
                        x: Some(x_grid[i].clone()),
                        x_other: Some(x_grid[j].clone()),
                        y: Some(y),
                        z: Some(z),
                        value: Some(f64::INFINITY),
                        ..Default::default()
                    });
                    break 'outer;
                }
                if num / den > ratio {
                    ratio = num / den;
                    ratio_w = Witness {
                        x: Some(x_grid[i].clone()),
                        x_other: Some(x_grid[j].clone()),
                        y: Some(y),
                        z: Some(z),
                        value: Some(ratio),
                        ..Default::default()
                    };
                }
            }
        }
    }
    checks.push(match a4_fail {
        Some(w) => AssumptionCheck::fail("A.4", "density vanishes at one grid point but not another", w),
        None => AssumptionCheck::pass("A.4", "max density ratio over grid pairs", Some(ratio), Some(ratio_w)),
    });

    // A.5: irreducibility and aperiodicity per grid point; l0 = n0 = primitivity exponent.
    let mut a5_fail = None;
    let mut l0 = 0usize;
    for (x, m) in x_grid.iter().zip(&mats) {
        let st = support_structure(m);
        if let Some((from, to)) = st.unreachable {
            a5_fail = Some((
                "reducible kernel",
                Witness { x: Some(x.clone()), y: Some(from), z: Some(to), ..Default::default() },
            ));
            break;
        }
        if st.period != 1 {
            a5_fail = Some((
                "periodic kernel",
                Witness { x: Some(x.clone()), y: Some(0), value: Some(st.period as f64), ..Default::default() },
            ));
            break;
        }
        match primitivity_exponent(m) {
            Some(k) => l0 = l0.max(k),
            None => {
                a5_fail = Some(("no positive power", Witness { x: Some(x.clone()), ..Default::default() }));
                break;
            }
        }
    }
    let (l0, n0) = match a5_fail {
        Some((msg, w)) => {
            checks.push(AssumptionCheck::fail("A.5", msg, w));
            (None, None)
        }
        None => {
            checks.push(AssumptionCheck::pass("A.5", "irreducible and aperiodic at every grid point", Some(l0 as f64), None));
            (Some(l0), Some(l0))
        }
    };

    // A.6: exponential moments.
    for (id_detail, (sup, w)) in [("exponential moment of g", sup_g), ("exponential moment of the noise coordinates", sup_z)] {
        checks.push(if sup.is_finite() {
            AssumptionCheck::pass("A.6", format!("{id_detail}: sup over grid attained"), Some(sup), Some(w))
        } else {
            AssumptionCheck::fail("A.6", format!("{id_detail}: not finite on grid"), w)
        });
    }

    Ok(AssumptionReport { schema_version: REPORT_SCHEMA_VERSION, model: model.name.clone(), grid_points: x_grid.len(), checks, l0, n0 })
}
