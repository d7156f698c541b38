//! The stochastic approximation model: update map, noise kernel, start point.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kernel::{FiniteNoiseSpace, StateKernel};

/// Update map `g(x, z)` for a finite noise space.
pub trait UpdateMap: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    /// Write `g(x, z)` into `out` (length `dim`).
    fn eval(&self, x: &[f64], z: usize, out: &mut [f64]);
}

/// `g(x, z) = c_z − λ·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineUpdate {
    values: Vec<Vec<f64>>,
    relax: f64,
}

impl AffineUpdate {
    pub fn new(values: Vec<Vec<f64>>, relax: f64) -> Result<Self> {
        let dim = values.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidInput("update values must be non-empty rows of equal length".into()));
        }
        if !relax.is_finite() || values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("update values must be finite".into()));
        }
        Ok(Self { values, relax })
    }

    /// Scalar values, one per noise point.
    pub fn scalar(values: &[f64], relax: f64) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect(), relax)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl UpdateMap for AffineUpdate {
    fn dim(&self) -> usize {
        self.values[0].len()
    }

    fn eval(&self, x: &[f64], z: usize, out: &mut [f64]) {
        for ((o, c), xi) in out.iter_mut().zip(&self.values[z]).zip(x) {
            *o = c - self.relax * xi;
        }
    }
}

type UpdateFn = dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync;

/// Update map backed by a closure.
#[derive(Clone)]
pub struct FnUpdate {
    dim: usize,
    f: Arc<UpdateFn>,
}

impl FnUpdate {
    pub fn new(dim: usize, f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f) }
    }
}

impl fmt::Debug for FnUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnUpdate").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl UpdateMap for FnUpdate {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], z: usize, out: &mut [f64]) {
        (self.f)(x, z, out)
    }
}

/// Mean drift `b(x)` of an additive-Gaussian model `g(x, y) = b(x) + y`.
pub trait DriftMap: Send + Sync + fmt::Debug {
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

/// `b(x) = c − λ·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDrift {
    pub offset: Vec<f64>,
    pub relax: f64,
}

impl DriftMap for LinearDrift {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for ((o, c), xi) in out.iter_mut().zip(&self.offset).zip(x) {
            *o = c - self.relax * xi;
        }
    }
}

#[derive(Debug, Clone)]
pub enum Dynamics {
    /// State-dependent Markov noise on a finite space.
    Finite { space: FiniteNoiseSpace, kernel: Arc<dyn StateKernel>, update: Arc<dyn UpdateMap>, y0: usize },
    /// i.i.d. centred Gaussian noise, `g(x, y) = b(x) + y`, `y ~ N(0, σ²I)`.
    /// Carries the closed-form Hamiltonian `⟨α, b(x)⟩ + σ²|α|²/2`.
    GaussianAdditive { drift: Arc<dyn DriftMap>, sigma: f64 },
}

/// `X_{k+1} = X_k + ε_{k+1} g(X_k, Y_{k+1})`, `Y_{k+1} ~ ρ_{X_k}(Y_k, ·)`.
#[derive(Debug, Clone)]
pub struct SaModel {
    pub name: String,
    pub dim: usize,
    pub x0: Vec<f64>,
    pub dynamics: Dynamics,
}

impl SaModel {
    pub fn finite(
        name: impl Into<String>,
        kernel: Arc<dyn StateKernel>,
        update: Arc<dyn UpdateMap>,
        x0: Vec<f64>,
        y0: usize,
    ) -> Result<Self> {
        let space = FiniteNoiseSpace::new(kernel.size())?;
        Self::finite_with_space(name, space, kernel, update, x0, y0)
    }

    pub fn finite_with_space(
        name: impl Into<String>,
        space: FiniteNoiseSpace,
        kernel: Arc<dyn StateKernel>,
        update: Arc<dyn UpdateMap>,
        x0: Vec<f64>,
        y0: usize,
    ) -> Result<Self> {
        let dim = update.dim();
        if x0.len() != dim {
            return Err(Error::InvalidInput(format!("x0 has length {}, expected {dim}", x0.len())));
        }
        if space.size() != kernel.size() {
            return Err(Error::InvalidInput("noise space and kernel sizes differ".into()));
        }
        if y0 >= kernel.size() {
            return Err(Error::InvalidInput(format!("y0 = {y0} outside noise space of size {}", kernel.size())));
        }
        Ok(Self { name: name.into(), dim, x0, dynamics: Dynamics::Finite { space, kernel, update, y0 } })
    }

    pub fn gaussian(name: impl Into<String>, drift: Arc<dyn DriftMap>, sigma: f64, x0: Vec<f64>) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma = {sigma} must be >= 0")));
        }
        Ok(Self { name: name.into(), dim: x0.len(), x0, dynamics: Dynamics::GaussianAdditive { drift, sigma } })
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.dim {
            return Err(Error::InvalidInput(format!("x0 has length {}, expected {}", x0.len(), self.dim)));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn kernel(&self) -> Result<&Arc<dyn StateKernel>> {
        match &self.dynamics {
            Dynamics::Finite { kernel, .. } => Ok(kernel),
            Dynamics::GaussianAdditive { .. } => Err(Error::NoFiniteKernel),
        }
    }

    pub fn update(&self) -> Result<&Arc<dyn UpdateMap>> {
        match &self.dynamics {
            Dynamics::Finite { update, .. } => Ok(update),
            Dynamics::GaussianAdditive { .. } => Err(Error::NoFiniteKernel),
        }
    }

    pub fn noise_space(&self) -> Result<&FiniteNoiseSpace> {
        match &self.dynamics {
            Dynamics::Finite { space, .. } => Ok(space),
            Dynamics::GaussianAdditive { .. } => Err(Error::NoFiniteKernel),
        }
    }

    /// `ρ_x` as a dense matrix.
    pub fn kernel_matrix(&self, x: &[f64]) -> Result<Array2<f64>> {
        self.check_point(x)?;
        Ok(self.kernel()?.matrix(x))
    }

    /// Row `z` holds `g(x, z)`.
    pub fn update_table(&self, x: &[f64]) -> Result<Array2<f64>> {
        self.check_point(x)?;
        let update = self.update()?;
        let size = self.kernel()?.size();
        let mut table = Array2::zeros((size, self.dim));
        let mut buf = vec![0.0; self.dim];
        for z in 0..size {
            update.eval(x, z, &mut buf);
            table.row_mut(z).iter_mut().zip(&buf).for_each(|(t, b)| *t = *b);
        }
        Ok(table)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!("point has length {}, expected {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("point has non-finite coordinates".into()));
        }
        Ok(())
    }
}
