//! Packaged models: small demos, logistic-regression SGD, persistent
//! contrastive divergence on a restricted Boltzmann machine, and
//! Wang-Landau with its multicanonical and free-energy presets.
//!
//! Every model here lives on a finite noise space small enough for the
//! exact oracles (enumerated Gibbs laws, stratum masses) to be computed.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{FiniteNoiseSpace, FnKernel, IidKernel, MatrixKernel, StateKernel};
use crate::model::{AffineUpdate, FnUpdate, LinearDrift, SaModel, UpdateMap};
use crate::schedule::StepSchedule;
use crate::sim;

/// Numerically stable logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------- demos

/// i.i.d. noise on `{0, 1}` with `P(1) = p` and `g(x, z) = z`.
pub fn bernoulli(p: f64, x0: f64) -> Result<SaModel> {
    let kernel = Arc::new(IidKernel::new(vec![1.0 - p, p])?);
    SaModel::finite("bernoulli", kernel, Arc::new(AffineUpdate::scalar(&[0.0, 1.0], 0.0)?), vec![x0], 0)
}

/// i.i.d. noise with law `q` and `g(x, z) = c_z − λx`.
pub fn iid(q: Vec<f64>, values: Vec<Vec<f64>>, relax: f64, x0: Vec<f64>) -> Result<SaModel> {
    let update = AffineUpdate::new(values, relax)?;
    if update.len() != q.len() {
        return Err(Error::InvalidInput(format!("{} update rows for {} noise points", update.len(), q.len())));
    }
    SaModel::finite("iid", Arc::new(IidKernel::new(q)?), Arc::new(update), x0, 0)
}

/// Chain `[[1−a, a], [b, 1−b]]` with `g(x, z) = c_z − λx`.
pub fn two_state(a: f64, b: f64, values: [f64; 2], relax: f64, x0: f64) -> Result<SaModel> {
    let kernel = Arc::new(MatrixKernel::two_state(a, b)?);
    SaModel::finite("two_state", kernel, Arc::new(AffineUpdate::scalar(&values, relax)?), vec![x0], 0)
}

/// Two-state chain whose switching rates depend on the iterate:
/// `P(0→1) = lo + (hi − lo)·σ(x)`, `P(1→0) = lo + (hi − lo)·σ(−x)`,
/// with `g(x, z) = c_z − λx`.
pub fn state_dependent_two_state(lo: f64, hi: f64, values: [f64; 2], relax: f64, x0: f64) -> Result<SaModel> {
    if !(0.0 < lo && lo <= hi && hi < 1.0) {
        return Err(Error::InvalidInput(format!("need 0 < lo <= hi < 1, got lo = {lo}, hi = {hi}")));
    }
    let kernel = FnKernel::new(2, move |x: &[f64], y: usize, row: &mut [f64]| {
        let s = sigmoid(if y == 0 { x[0] } else { -x[0] });
        let flip = lo + (hi - lo) * s;
        row[1 - y] = flip;
        row[y] = 1.0 - flip;
    });
    SaModel::finite(
        "state_dependent_two_state",
        Arc::new(kernel),
        Arc::new(AffineUpdate::scalar(&values, relax)?),
        vec![x0],
        0,
    )
}

/// `g(x, y) = c − λx + y` with `y ~ N(0, σ²I)`.
pub fn gaussian(offset: Vec<f64>, relax: f64, sigma: f64, x0: Vec<f64>) -> Result<SaModel> {
    if offset.len() != x0.len() {
        return Err(Error::InvalidInput("offset and x0 lengths differ".into()));
    }
    SaModel::gaussian("gaussian", Arc::new(LinearDrift { offset, relax }), sigma, x0)
}

// ---------------------------------------------------- logistic regression

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeatureMap {
    Identity,
    /// Prepend a constant 1.
    Intercept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    map: FeatureMap,
}

impl LogisticDataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<f64>, map: FeatureMap) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput("dataset needs at least one example".into()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::InvalidInput(format!("{} inputs for {} labels", inputs.len(), labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&u| u != 1.0 && u != -1.0) {
            return Err(Error::InvalidInput(format!("label {bad} is not in {{-1, 1}}")));
        }
        let width = inputs[0].len();
        if inputs.iter().any(|v| v.len() != width || v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput("inputs must be finite rows of equal length".into()));
        }
        let features: Vec<Vec<f64>> = inputs
            .into_iter()
            .map(|v| match map {
                FeatureMap::Identity => v,
                FeatureMap::Intercept => std::iter::once(1.0).chain(v).collect(),
            })
            .collect();
        if features[0].is_empty() {
            return Err(Error::InvalidInput("feature vectors are empty".into()));
        }
        Ok(Self { features, labels, map })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.map
    }

    /// `φ(ξ_m)`.
    pub fn feature(&self, m: usize) -> &[f64] {
        &self.features[m]
    }

    pub fn label(&self, m: usize) -> f64 {
        self.labels[m]
    }

    /// `G_m(x) = −log σ(υ_m xᵀφ_m)`.
    pub fn loss_term(&self, x: &[f64], m: usize) -> f64 {
        let u = self.labels[m] * dot(x, &self.features[m]);
        // −log σ(u) = log(1 + e^{−u})
        if u > 0.0 {
            (-u).exp().ln_1p()
        } else {
            -u + u.exp().ln_1p()
        }
    }

    pub fn loss(&self, x: &[f64]) -> f64 {
        (0..self.len()).map(|m| self.loss_term(x, m)).sum()
    }

    /// `∇G_m(x) = −υ_m φ_m (1 − σ(υ_m xᵀφ_m))`.
    pub fn loss_grad(&self, x: &[f64], m: usize, out: &mut [f64]) {
        let u = self.labels[m];
        let c = -u * (1.0 - sigmoid(u * dot(x, &self.features[m])));
        for (o, f) in out.iter_mut().zip(&self.features[m]) {
            *o = c * f;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// SGD on the logistic loss: `Y` uniform on the examples and
/// `g(x, m) = −∇G_m(x)`.
pub fn sgd_logistic_model(data: &LogisticDataset, x0: Vec<f64>) -> Result<SaModel> {
    if x0.len() != data.dim() {
        return Err(Error::InvalidInput(format!("x0 has length {}, expected {}", x0.len(), data.dim())));
    }
    let kernel = Arc::new(IidKernel::uniform(data.len())?);
    let d = data.clone();
    let update = FnUpdate::new(data.dim(), move |x: &[f64], m: usize, out: &mut [f64]| {
        d.loss_grad(x, m, out);
        out.iter_mut().for_each(|o| *o = -*o);
    });
    SaModel::finite("sgd_logistic", kernel, Arc::new(update), x0, 0)
}

/// `H̄(x, α) = log((1/M) Σ_m exp(−⟨α, ∇G_m(x)⟩))`.
pub fn sgd_hamiltonian_closed(data: &LogisticDataset, x: &[f64], alpha: &[f64]) -> f64 {
    let mut grad = vec![0.0; data.dim()];
    let terms: Vec<f64> = (0..data.len())
        .map(|m| {
            data.loss_grad(x, m, &mut grad);
            -dot(alpha, &grad)
        })
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + (terms.iter().map(|t| (t - top).exp()).sum::<f64>() / data.len() as f64).ln()
}

// ------------------------------------------------------------------- RBM

/// Largest `d_V + d_H` for which the joint state space is enumerated.
pub const RBM_MAX_UNITS: usize = 12;

/// Parameters `x = (W, b_V, b_H)` are flattened as `W` row-major
/// (`d_V × d_H`), then `b_V`, then `b_H`. Noise points encode `v` in the
/// low `d_V` bits and `h` in the next `d_H` bits.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmSpec {
    pub visible: usize,
    pub hidden: usize,
    pub weights: Vec<f64>,
    pub bias_v: Vec<f64>,
    pub bias_h: Vec<f64>,
    pub data: Vec<Vec<u8>>,
}

impl RbmSpec {
    pub fn validate(&self) -> Result<()> {
        let (dv, dh) = (self.visible, self.hidden);
        if dv == 0 || dh == 0 {
            return Err(Error::InvalidInput("RBM needs at least one visible and one hidden unit".into()));
        }
        if dv + dh > RBM_MAX_UNITS {
            return Err(Error::InvalidInput(format!("d_V + d_H = {} exceeds the bound {RBM_MAX_UNITS}", dv + dh)));
        }
        if self.weights.len() != dv * dh || self.bias_v.len() != dv || self.bias_h.len() != dh {
            return Err(Error::InvalidInput("RBM parameter shapes do not match d_V, d_H".into()));
        }
        if self.weights.iter().chain(&self.bias_v).chain(&self.bias_h).any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("RBM parameters must be finite".into()));
        }
        if self.data.is_empty() {
            return Err(Error::InvalidInput("RBM needs at least one observed sample".into()));
        }
        if self.data.iter().any(|v| v.len() != dv || v.iter().any(|&b| b > 1)) {
            return Err(Error::InvalidInput(format!("observed samples must be binary vectors of length {dv}")));
        }
        Ok(())
    }

    pub fn param_dim(&self) -> usize {
        self.visible * self.hidden + self.visible + self.hidden
    }

    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias_v).chain(&self.bias_h).copied().collect()
    }

    pub fn states(&self) -> usize {
        1 << (self.visible + self.hidden)
    }

    fn layout(&self) -> RbmLayout {
        RbmLayout { dv: self.visible, dh: self.hidden }
    }
}

#[derive(Debug, Clone, Copy)]
struct RbmLayout {
    dv: usize,
    dh: usize,
}

impl RbmLayout {
    fn w(&self, x: &[f64], i: usize, j: usize) -> f64 {
        x[i * self.dh + j]
    }

    fn bv(&self, x: &[f64], i: usize) -> f64 {
        x[self.dv * self.dh + i]
    }

    fn bh(&self, x: &[f64], j: usize) -> f64 {
        x[self.dv * self.dh + self.dv + j]
    }

    fn hidden_field(&self, x: &[f64], v: usize, j: usize) -> f64 {
        self.bh(x, j) + (0..self.dv).filter(|&i| v >> i & 1 == 1).map(|i| self.w(x, i, j)).sum::<f64>()
    }

    fn visible_field(&self, x: &[f64], h: usize, i: usize) -> f64 {
        self.bv(x, i) + (0..self.dh).filter(|&j| h >> j & 1 == 1).map(|j| self.w(x, i, j)).sum::<f64>()
    }

    /// `−E(v, h; x) = vᵀWh + vᵀb_V + hᵀb_H`.
    fn neg_energy(&self, x: &[f64], v: usize, h: usize) -> f64 {
        let mut e = 0.0;
        for i in (0..self.dv).filter(|&i| v >> i & 1 == 1) {
            e += self.bv(x, i);
            for j in (0..self.dh).filter(|&j| h >> j & 1 == 1) {
                e += self.w(x, i, j);
            }
        }
        e + (0..self.dh).filter(|&j| h >> j & 1 == 1).map(|j| self.bh(x, j)).sum::<f64>()
    }

    /// `−∇_x E(v, h; x)`, the sufficient statistics `(v hᵀ, v, h)`.
    fn add_stats(&self, v: usize, h: usize, weight: f64, out: &mut [f64]) {
        for i in 0..self.dv {
            let vi = (v >> i & 1) as f64;
            for j in 0..self.dh {
                out[i * self.dh + j] += weight * vi * (h >> j & 1) as f64;
            }
            out[self.dv * self.dh + i] += weight * vi;
        }
        for j in 0..self.dh {
            out[self.dv * self.dh + self.dv + j] += weight * (h >> j & 1) as f64;
        }
    }

    /// Positive phase `E[(v hᵀ, v, h) | v]` at a fixed visible vector.
    fn add_conditional_stats(&self, x: &[f64], v: usize, weight: f64, out: &mut [f64]) {
        for j in 0..self.dh {
            let p = sigmoid(self.hidden_field(x, v, j));
            for i in (0..self.dv).filter(|&i| v >> i & 1 == 1) {
                out[i * self.dh + j] += weight * p;
            }
            out[self.dv * self.dh + self.dv + j] += weight * p;
        }
        for i in (0..self.dv).filter(|&i| v >> i & 1 == 1) {
            out[self.dv * self.dh + i] += weight;
        }
    }

    fn split(&self, y: usize) -> (usize, usize) {
        (y & ((1 << self.dv) - 1), y >> self.dv)
    }
}

fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum()
}

/// Block-Gibbs kernel `ρ_x((v₀,h₀),(v₁,h₁)) = p(h₁|v₀,x) p(v₁|h₁,x)`.
#[derive(Debug, Clone)]
pub struct RbmGibbsKernel {
    layout: RbmLayout,
}

impl StateKernel for RbmGibbsKernel {
    fn size(&self) -> usize {
        1 << (self.layout.dv + self.layout.dh)
    }

    fn fill_row(&self, x: &[f64], y: usize, row: &mut [f64]) {
        let l = self.layout;
        let (v0, _) = l.split(y);
        let ph: Vec<f64> = (0..l.dh).map(|j| sigmoid(l.hidden_field(x, v0, j))).collect();
        for h1 in 0..1usize << l.dh {
            let p_h: f64 = (0..l.dh).map(|j| if h1 >> j & 1 == 1 { ph[j] } else { 1.0 - ph[j] }).product();
            let pv: Vec<f64> = (0..l.dv).map(|i| sigmoid(l.visible_field(x, h1, i))).collect();
            for v1 in 0..1usize << l.dv {
                let p_v: f64 = (0..l.dv).map(|i| if v1 >> i & 1 == 1 { pv[i] } else { 1.0 - pv[i] }).product();
                row[v1 | h1 << l.dv] = p_h * p_v;
            }
        }
    }

    fn sample_next(&self, x: &[f64], y: usize, rng: &mut dyn RngCore, _scratch: &mut Vec<f64>) -> usize {
        let l = self.layout;
        let (v0, _) = l.split(y);
        let mut h1 = 0;
        for j in 0..l.dh {
            if rng.random::<f64>() < sigmoid(l.hidden_field(x, v0, j)) {
                h1 |= 1 << j;
            }
        }
        let mut v1 = 0;
        for i in 0..l.dv {
            if rng.random::<f64>() < sigmoid(l.visible_field(x, h1, i)) {
                v1 |= 1 << i;
            }
        }
        v1 | h1 << l.dv
    }
}

/// `g(x, y) = (1/M) Σ_m E[s(v^{(m)}, h) | v^{(m)}] − s(y)` with `s = −∇_x E`,
/// so that `ḡ(x) = ∇_x (1/M) Σ_m log p(v^{(m)} | x)`.
#[derive(Debug, Clone)]
pub struct RbmUpdate {
    layout: RbmLayout,
    data: Vec<usize>,
}

impl UpdateMap for RbmUpdate {
    fn dim(&self) -> usize {
        let l = self.layout;
        l.dv * l.dh + l.dv + l.dh
    }

    fn eval(&self, x: &[f64], z: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let w = 1.0 / self.data.len() as f64;
        for &v in &self.data {
            self.layout.add_conditional_stats(x, v, w, out);
        }
        let (v, h) = self.layout.split(z);
        self.layout.add_stats(v, h, -1.0, out);
    }
}

/// PCD model over `{0,1}^{d_V + d_H}`, started at the parameters in `spec` and
/// at the all-zero joint state.
pub fn rbm_model(spec: &RbmSpec) -> Result<SaModel> {
    spec.validate()?;
    let layout = spec.layout();
    let kernel = Arc::new(RbmGibbsKernel { layout });
    let update = Arc::new(RbmUpdate { layout, data: spec.data.iter().map(|v| bits_to_index(v)).collect() });
    let labels = (0..spec.states())
        .map(|y| {
            let (v, h) = layout.split(y);
            format!("v{:0w$b}h{:0u$b}", v, h, w = layout.dv, u = layout.dh)
        })
        .collect();
    let space = FiniteNoiseSpace::new(spec.states())?.with_labels(labels)?;
    SaModel::finite_with_space("rbm", space, kernel, update, spec.params(), 0)
}

/// Joint Gibbs law `p(v, h | x) ∝ e^{−E(v, h; x)}` by enumeration, indexed
/// like the noise space of [`rbm_model`].
pub fn rbm_gibbs_law(spec: &RbmSpec, x: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.len() != spec.param_dim() {
        return Err(Error::InvalidInput(format!("x has length {}, expected {}", x.len(), spec.param_dim())));
    }
    let l = spec.layout();
    let logw: Vec<f64> = (0..spec.states())
        .map(|y| {
            let (v, h) = l.split(y);
            l.neg_energy(x, v, h)
        })
        .collect();
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|a| (a - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|a| a / z).collect())
}

/// `(1/M) Σ_m log p(v^{(m)} | x)` by enumeration.
pub fn rbm_log_likelihood(spec: &RbmSpec, x: &[f64]) -> Result<f64> {
    let l = spec.layout();
    let law = rbm_gibbs_law(spec, x)?;
    let mut marginal = vec![0.0; 1 << l.dv];
    for (y, p) in law.iter().enumerate() {
        marginal[l.split(y).0] += p;
    }
    Ok(spec.data.iter().map(|v| marginal[bits_to_index(v)].ln()).sum::<f64>() / spec.data.len() as f64)
}

/// Exact gradient of [`rbm_log_likelihood`]: positive phase minus the
/// enumerated model expectation of the sufficient statistics.
pub fn rbm_exact_gradient(spec: &RbmSpec, x: &[f64]) -> Result<Vec<f64>> {
    let l = spec.layout();
    let law = rbm_gibbs_law(spec, x)?;
    let mut out = vec![0.0; spec.param_dim()];
    let w = 1.0 / spec.data.len() as f64;
    for v in &spec.data {
        l.add_conditional_stats(x, bits_to_index(v), w, &mut out);
    }
    for (y, p) in law.iter().enumerate() {
        let (v, h) = l.split(y);
        l.add_stats(v, h, -p, &mut out);
    }
    Ok(out)
}

/// A small RBM with deterministic pseudo-random weights.
pub fn rbm_preset(visible: usize, hidden: usize, seed: u64) -> Result<RbmSpec> {
    let mut rng = sim::stream_rng(seed, 0);
    let mut draw = |scale: f64| scale * (2.0 * rng.random::<f64>() - 1.0);
    let weights = (0..visible * hidden).map(|_| draw(1.0)).collect();
    let bias_v = (0..visible).map(|_| draw(0.5)).collect();
    let bias_h = (0..hidden).map(|_| draw(0.5)).collect();
    let data = (0..4usize).map(|m| (0..visible).map(|i| ((m * 5 + i * 3) % 4 < 2) as u8).collect()).collect();
    let spec = RbmSpec { visible, hidden, weights, bias_v, bias_h, data };
    spec.validate()?;
    Ok(spec)
}

/// Sample mean of `g(x, Y_k)` along the noise chain at a frozen `x`, with a
/// batch-means standard error per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainAverage {
    pub steps: usize,
    pub batches: usize,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

pub fn frozen_chain_average(model: &SaModel, x: &[f64], steps: usize, batches: usize, seed: u64) -> Result<ChainAverage> {
    model.check_point(x)?;
    if batches < 2 || steps < batches {
        return Err(Error::InvalidInput(format!("need steps >= batches >= 2, got {steps} steps, {batches} batches")));
    }
    let kernel = model.kernel()?;
    let update = model.update()?;
    let crate::model::Dynamics::Finite { y0, .. } = &model.dynamics else {
        return Err(Error::NoFiniteKernel);
    };
    let mut rng = sim::stream_rng(seed, 0);
    let mut scratch = Vec::new();
    let mut y = *y0;
    let d = model.dim;
    let per = steps / batches;
    let mut g = vec![0.0; d];
    let mut means = vec![vec![0.0; d]; batches];
    for batch in means.iter_mut() {
        for _ in 0..per {
            y = kernel.sample_next(x, y, &mut rng, &mut scratch);
            update.eval(x, y, &mut g);
            batch.iter_mut().zip(&g).for_each(|(b, v)| *b += v);
        }
        batch.iter_mut().for_each(|b| *b /= per as f64);
    }
    let b = batches as f64;
    let mean: Vec<f64> = (0..d).map(|i| means.iter().map(|m| m[i]).sum::<f64>() / b).collect();
    let std_error = (0..d)
        .map(|i| (means.iter().map(|m| (m[i] - mean[i]).powi(2)).sum::<f64>() / (b - 1.0) / b).sqrt())
        .collect();
    Ok(ChainAverage { steps: per * batches, batches, mean, std_error })
}

// ----------------------------------------------------------- Wang-Landau

/// Strata of a Wang-Landau target: `weights[i][y] = f_i(y)` for `y` in the
/// finite set `𝒴_i` under counting measure.
#[derive(Debug, Clone, PartialEq)]
pub struct WangLandauSpec {
    weights: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    labels: Vec<String>,
    local_move: f64,
}

impl WangLandauSpec {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("Wang-Landau needs at least one stratum".into()));
        }
        for (i, w) in weights.iter().enumerate() {
            if w.is_empty() {
                return Err(Error::InvalidInput(format!("stratum {i} is empty")));
            }
            if w.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
                return Err(Error::InvalidInput(format!("stratum {i} has a zero or non-finite weight")));
            }
        }
        let mut offsets = vec![0];
        for w in &weights {
            offsets.push(offsets.last().unwrap() + w.len());
        }
        let labels = weights.iter().enumerate().flat_map(|(i, w)| (0..w.len()).map(move |y| format!("{y}@{i}"))).collect();
        Ok(Self { weights, offsets, labels, local_move: WL_LOCAL_MOVE })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.size() {
            return Err(Error::InvalidInput(format!("{} labels for {} states", labels.len(), self.size())));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Probability of a within-stratum proposal; forced to 1 with a single
    /// stratum.
    pub fn with_local_move(mut self, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidInput(format!("local move probability {p} outside (0, 1)")));
        }
        self.local_move = p;
        Ok(self)
    }

    pub fn local_move_probability(&self) -> f64 {
        if self.strata() == 1 {
            1.0
        } else {
            self.local_move
        }
    }

    pub fn strata(&self) -> usize {
        self.weights.len()
    }

    /// Size of the union space.
    pub fn size(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// `(y, i)` for a union-space index.
    pub fn locate(&self, s: usize) -> (usize, usize) {
        let i = self.offsets.partition_point(|&o| o <= s) - 1;
        (s - self.offsets[i], i)
    }

    pub fn index(&self, y: usize, i: usize) -> usize {
        self.offsets[i] + y
    }

    /// Stratum masses `x(i) = Σ_y f_i(y) / Z`.
    pub fn targets(&self) -> Vec<f64> {
        let mass: Vec<f64> = self.weights.iter().map(|w| w.iter().sum()).collect();
        let z: f64 = mass.iter().sum();
        mass.into_iter().map(|m| m / z).collect()
    }
}

/// Default probability of proposing a uniform point inside the current
/// stratum. Otherwise another stratum is drawn uniformly and a point
/// uniformly inside it.
pub const WL_LOCAL_MOVE: f64 = 0.5;

/// Metropolis kernel on the union space with invariant law
/// `π(y, i) ∝ f_i(y) / x(i)`.
#[derive(Debug, Clone)]
pub struct WangLandauKernel {
    spec: Arc<WangLandauSpec>,
}

impl WangLandauKernel {
    pub fn new(spec: Arc<WangLandauSpec>) -> Self {
        Self { spec }
    }

    fn weight(x: &[f64], i: usize) -> f64 {
        x[i].max(f64::MIN_POSITIVE)
    }

    fn flip_accept(&self, x: &[f64], y: usize, i: usize, z: usize, j: usize) -> f64 {
        let w = &self.spec.weights;
        let num = w[j][z] / Self::weight(x, j) * w[j].len() as f64;
        let den = w[i][y] / Self::weight(x, i) * w[i].len() as f64;
        (num / den).min(1.0)
    }
}

impl StateKernel for WangLandauKernel {
    fn size(&self) -> usize {
        self.spec.size()
    }

    fn fill_row(&self, x: &[f64], s: usize, row: &mut [f64]) {
        let spec = &self.spec;
        let (y, i) = spec.locate(s);
        let local_p = spec.local_move_probability();
        row.iter_mut().for_each(|r| *r = 0.0);
        let local = &spec.weights[i];
        for (z, &fz) in local.iter().enumerate() {
            row[spec.index(z, i)] += local_p / local.len() as f64 * (fz / local[y]).min(1.0);
        }
        for j in (0..spec.strata()).filter(|&j| j != i) {
            let q = (1.0 - local_p) / ((spec.strata() - 1) * spec.weights[j].len()) as f64;
            for z in 0..spec.weights[j].len() {
                row[spec.index(z, j)] += q * self.flip_accept(x, y, i, z, j);
            }
        }
        let off: f64 = row.iter().enumerate().filter(|&(t, _)| t != s).map(|(_, r)| r).sum();
        row[s] = 1.0 - off;
    }

    fn sample_next(&self, x: &[f64], s: usize, rng: &mut dyn RngCore, _scratch: &mut Vec<f64>) -> usize {
        let spec = &self.spec;
        let (y, i) = spec.locate(s);
        let (z, j, accept) = if rng.random::<f64>() < spec.local_move_probability() {
            let w = &spec.weights[i];
            let z = rng.random_range(0..w.len());
            (z, i, (w[z] / w[y]).min(1.0))
        } else {
            let mut j = rng.random_range(0..spec.strata() - 1);
            if j >= i {
                j += 1;
            }
            let z = rng.random_range(0..spec.weights[j].len());
            (z, j, self.flip_accept(x, y, i, z, j))
        };
        if rng.random::<f64>() < accept {
            spec.index(z, j)
        } else {
            s
        }
    }
}

/// Wang-Landau as a stochastic approximation on the simplex:
/// `g(x, (y, j)) = x(j)(e_j − x)`, the first-order form of the normalized
/// multiplicative update. Starts at uniform weights and at the first point
/// of stratum 0.
pub fn wang_landau_model(spec: Arc<WangLandauSpec>) -> Result<SaModel> {
    let d = spec.strata();
    let s = spec.clone();
    let update = FnUpdate::new(d, move |x: &[f64], z: usize, out: &mut [f64]| {
        let (_, j) = s.locate(z);
        for (k, o) in out.iter_mut().enumerate() {
            *o = x[j] * ((k == j) as u8 as f64 - x[k]);
        }
    });
    let space = FiniteNoiseSpace::new(spec.size())?.with_labels(spec.labels.clone())?;
    let kernel = Arc::new(WangLandauKernel::new(spec));
    SaModel::finite_with_space("wang_landau", space, kernel, Arc::new(update), vec![1.0 / d as f64; d], 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WangLandauRun {
    pub steps: usize,
    /// Unnormalized weights `φ_k`, rescaled by a common factor whenever they
    /// grow large (ratios are unaffected).
    pub phi: Vec<f64>,
    pub x: Vec<f64>,
    /// `max_k |Σ_i x_k(i) − 1|`.
    pub max_normalization_error: f64,
    pub min_weight: f64,
    /// `(k, x_k)` every `record_every` steps, plus the final step.
    pub trace: Vec<(usize, Vec<f64>)>,
}

/// Runs `φ_{k+1}(i) = φ_k(i)(1 + ε_{k+1} 1{I_{k+1} = i})`,
/// `x_{k+1} = φ_{k+1} / Σ φ_{k+1}` from `φ_0 = 1` exactly as stated, with
/// `(Y_{k+1}, I_{k+1}) ~ ρ_{x_k}((Y_k, I_k), ·)`.
pub fn wang_landau_run(
    spec: Arc<WangLandauSpec>,
    schedule: &StepSchedule,
    steps: usize,
    seed: u64,
    record_every: usize,
) -> Result<WangLandauRun> {
    let d = spec.strata();
    let kernel = WangLandauKernel::new(spec.clone());
    let mut rng = sim::stream_rng(seed, 0);
    let mut scratch = Vec::new();
    let mut phi = vec![1.0; d];
    let mut x = vec![1.0 / d as f64; d];
    let mut s = 0;
    let mut max_err: f64 = 0.0;
    let mut min_weight = f64::INFINITY;
    let mut trace = vec![(0, x.clone())];
    for k in 0..steps {
        s = kernel.sample_next(&x, s, &mut rng, &mut scratch);
        let (_, i) = spec.locate(s);
        phi[i] *= 1.0 + schedule.epsilon(k + 1)?;
        let top = phi.iter().cloned().fold(0.0, f64::max);
        if top > 1e100 {
            phi.iter_mut().for_each(|p| *p /= top);
        }
        let total: f64 = phi.iter().sum();
        for (xi, p) in x.iter_mut().zip(&phi) {
            *xi = p / total;
        }
        max_err = max_err.max((x.iter().sum::<f64>() - 1.0).abs());
        min_weight = min_weight.min(x.iter().cloned().fold(f64::INFINITY, f64::min));
        if record_every > 0 && (k + 1) % record_every == 0 {
            trace.push((k + 1, x.clone()));
        }
    }
    if trace.last().map(|t| t.0) != Some(steps) {
        trace.push((steps, x.clone()));
    }
    Ok(WangLandauRun { steps, phi, x, max_normalization_error: max_err, min_weight, trace })
}

/// `−log(φ(i) / φ(1))`, estimating `F(ω_i) − F(ω_1)`.
pub fn wl_free_energy_differences(phi: &[f64]) -> Result<Vec<f64>> {
    if phi.is_empty() {
        return Err(Error::InvalidInput("empty weight vector".into()));
    }
    if let Some(i) = phi.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::InvalidInput(format!("weight {i} is zero or non-finite")));
    }
    Ok(phi.iter().map(|p| -(p / phi[0]).ln()).collect())
}

/// `E(σ) = −J Σ_i σ_i σ_{i+1}` on a ring of `sites` spins; index bit `i`
/// set means `σ_i = +1`.
pub fn ring_energy(sites: usize, coupling: f64, sigma: usize) -> f64 {
    let spin = |i: usize| if sigma >> (i % sites) & 1 == 1 { 1.0 } else { -1.0 };
    let bonds = if sites == 2 { 1 } else { sites };
    -coupling * (0..bonds).map(|i| spin(i) * spin(i + 1)).sum::<f64>()
}

/// Multicanonical preset: spins on a ring, strata
/// `𝒴_i = {σ : E_{i−1} < E(σ) ≤ E_i}` for the given interior cut points,
/// `f_i = e^{−E}`. Returns the [`WangLandauSpec`] and the enumerated stratum masses.
pub fn multicanonical_ring(sites: usize, coupling: f64, cuts: &[f64]) -> Result<(WangLandauSpec, Vec<f64>)> {
    if sites < 2 || sites > 16 {
        return Err(Error::InvalidInput(format!("ring size {sites} outside 2..=16")));
    }
    if cuts.windows(2).any(|w| w[1] <= w[0]) || cuts.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("energy cut points must be finite and increasing".into()));
    }
    let mut weights = vec![Vec::new(); cuts.len() + 1];
    let mut labels = vec![Vec::new(); cuts.len() + 1];
    for sigma in 0..1usize << sites {
        let e = ring_energy(sites, coupling, sigma);
        let i = cuts.partition_point(|&c| c < e);
        weights[i].push((-e).exp());
        labels[i].push(format!("{sigma:0w$b}", w = sites));
    }
    if let Some(i) = weights.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!("energy stratum {i} contains no configuration")));
    }
    let labels = labels.into_iter().enumerate().flat_map(|(i, l)| l.into_iter().map(move |s| format!("{s}@{i}"))).collect();
    let spec = WangLandauSpec::new(weights)?.with_labels(labels)?;
    let masses = spec.targets();
    Ok((spec, masses))
}

/// Free-energy preset: spins on a ring at inverse temperatures `betas`,
/// `E(σ, ω_i) = β_i E(σ)` with unit coupling and `f_i(σ) = e^{−E(σ, ω_i)}`.
/// Returns the [`WangLandauSpec`] and the enumerated `F(ω_i) − F(ω_1)`.
pub fn free_energy_ring(sites: usize, betas: &[f64]) -> Result<(WangLandauSpec, Vec<f64>)> {
    if sites < 2 || sites > 16 {
        return Err(Error::InvalidInput(format!("ring size {sites} outside 2..=16")));
    }
    if betas.is_empty() || betas.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("need at least one finite inverse temperature".into()));
    }
    let weights: Vec<Vec<f64>> = betas
        .iter()
        .map(|b| (0..1usize << sites).map(|s| (-b * ring_energy(sites, 1.0, s)).exp()).collect())
        .collect();
    let free: Vec<f64> = weights.iter().map(|w| -w.iter().sum::<f64>().ln()).collect();
    let diffs = free.iter().map(|f| f - free[0]).collect();
    Ok((WangLandauSpec::new(weights)?, diffs))
}
