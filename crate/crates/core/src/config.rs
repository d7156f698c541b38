//! Experiment configuration: a TOML document naming a model builder, a step
//! schedule and the parameters of every operation.
//!
//! [`ExperimentConfig::parse`] fills in every default, so
//! [`ExperimentConfig::to_toml`] echoes a fully explicit document and
//! parsing the echo gives back an identical value.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{rows_to_matrix, InterpolatedKernel};
use crate::model::{AffineUpdate, SaModel};
use crate::models::{self, FeatureMap, LogisticDataset, RbmSpec, WangLandauSpec, WL_LOCAL_MOVE};
use crate::schedule::{StepKind, StepSchedule};

/// Largest noise space a config may request.
pub const MAX_NOISE_STATES: usize = 4096;
/// Largest spin ring for the Wang-Landau presets.
pub const MAX_RING_SITES: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config override `{0}`: {1}")]
    Override(String, String),
    #[error("config: {0}")]
    Invalid(String),
}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Error::InvalidInput(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default = "default_schedule")]
    pub schedule: StepKind,
    pub model: ModelSpec,
    #[serde(default)]
    pub run: RunParams,
}

fn default_seed() -> u64 {
    1
}

fn default_horizon() -> f64 {
    1.0
}

fn default_out() -> String {
    "out".into()
}

fn default_schedule() -> StepKind {
    StepKind::Harmonic
}

/// Named model builders and their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Bernoulli {
        #[serde(default = "half")]
        p: f64,
        #[serde(default)]
        x0: f64,
    },
    Iid {
        probabilities: Vec<f64>,
        values: Vec<Vec<f64>>,
        #[serde(default)]
        relax: f64,
        x0: Vec<f64>,
    },
    TwoState {
        a: f64,
        b: f64,
        #[serde(default = "plus_minus")]
        values: [f64; 2],
        #[serde(default = "one")]
        relax: f64,
        #[serde(default)]
        x0: f64,
    },
    StateDependentTwoState {
        lo: f64,
        hi: f64,
        #[serde(default = "plus_minus")]
        values: [f64; 2],
        #[serde(default = "one")]
        relax: f64,
        #[serde(default)]
        x0: f64,
    },
    /// Kernels given as matrices at grid points of the first coordinate.
    GridMatrices {
        grid: Vec<f64>,
        matrices: Vec<Vec<Vec<f64>>>,
        values: Vec<Vec<f64>>,
        #[serde(default)]
        relax: f64,
        x0: Vec<f64>,
    },
    SgdLogistic {
        inputs: Vec<Vec<f64>>,
        labels: Vec<f64>,
        #[serde(default)]
        intercept: bool,
        #[serde(default)]
        x0: Vec<f64>,
    },
    /// Explicit parameters, or empty ones filled from a seeded preset.
    Rbm {
        #[serde(default = "three")]
        visible: usize,
        #[serde(default = "three")]
        hidden: usize,
        #[serde(default = "seven")]
        preset_seed: u64,
        #[serde(default)]
        weights: Vec<f64>,
        #[serde(default)]
        bias_v: Vec<f64>,
        #[serde(default)]
        bias_h: Vec<f64>,
        #[serde(default)]
        data: Vec<Vec<u8>>,
    },
    WangLandau {
        strata: Vec<Vec<f64>>,
        #[serde(default = "local_move")]
        local_move: f64,
    },
    Multicanonical {
        #[serde(default = "four")]
        sites: usize,
        #[serde(default = "half")]
        coupling: f64,
        #[serde(default = "cuts")]
        cuts: Vec<f64>,
        #[serde(default = "local_move")]
        local_move: f64,
    },
    FreeEnergy {
        #[serde(default = "three")]
        sites: usize,
        #[serde(default = "betas")]
        betas: Vec<f64>,
        #[serde(default = "local_move")]
        local_move: f64,
    },
    Gaussian {
        offset: Vec<f64>,
        #[serde(default = "one")]
        relax: f64,
        sigma: f64,
        x0: Vec<f64>,
    },
}

fn half() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn plus_minus() -> [f64; 2] {
    [-1.0, 1.0]
}
fn three() -> usize {
    3
}
fn four() -> usize {
    4
}
fn seven() -> u64 {
    7
}
fn local_move() -> f64 {
    WL_LOCAL_MOVE
}
fn cuts() -> Vec<f64> {
    vec![-1.0, 1.0]
}
fn betas() -> Vec<f64> {
    vec![0.5, 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// `min(1, ‖φ − ode_limit‖_∞)`
    CappedDeviation,
    /// `min(1, |φ(T) − end|)`
    CappedEndpoint,
}

/// Operation parameters. Empty vectors are replaced during normalization by
/// model-dependent defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunParams {
    /// Start index `n` of the simulated segment.
    pub n: usize,
    /// Start indices for Laplace sweeps.
    pub n_sweep: Vec<usize>,
    /// Monte Carlo sample count `N`.
    pub samples: usize,
    pub ode_dt: f64,
    /// Hamiltonian direction.
    pub alpha: Vec<f64>,
    /// Locations for `hamiltonian`, `rate-surface` and `check-assumptions`.
    pub x_grid: Vec<Vec<f64>>,
    /// Velocities for `rate-surface`.
    pub beta_grid: Vec<Vec<f64>>,
    /// Directions for `check-assumptions`.
    pub alpha_grid: Vec<Vec<f64>>,
    /// Segments of the piecewise-linear path in `minpath`.
    pub segments: usize,
    /// Gauss-Legendre nodes per segment.
    pub nodes: usize,
    pub max_iter: usize,
    /// Fixed end point; empty for a free end.
    pub end: Vec<f64>,
    /// Path CSV for `action` and `tube`; empty selects a computed path.
    pub path: String,
    pub radius: f64,
    pub functional: Functional,
    /// Bound `M` on the functional.
    pub bound: f64,
    /// Recursion steps for `demo-wl` and `demo-rbm`.
    pub steps: usize,
    pub record_every: usize,
    pub batches: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            n: 1000,
            n_sweep: Vec::new(),
            samples: 1000,
            ode_dt: 1e-3,
            alpha: Vec::new(),
            x_grid: Vec::new(),
            beta_grid: Vec::new(),
            alpha_grid: Vec::new(),
            segments: 8,
            nodes: crate::action::DEFAULT_NODES,
            max_iter: 300,
            end: Vec::new(),
            path: String::new(),
            radius: 0.05,
            functional: Functional::CappedDeviation,
            bound: 1.0,
            steps: 100_000,
            record_every: 1000,
            batches: 50,
        }
    }
}

impl ExperimentConfig {
    /// Parse, apply `key=value` overrides (dotted keys, TOML values, bare
    /// words taken as strings), then normalize.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        cfg.normalize()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_overrides(text, &[])
    }

    /// Panics only if a field was set out of TOML range (integers above
    /// `i64::MAX`) after parsing.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_toml`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        Ok(StepSchedule::new(self.schedule.clone())?)
    }

    pub fn build_model(&self) -> Result<SaModel> {
        self.model.build()
    }

    fn normalize(mut self) -> Result<Self, ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.schedule.validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid(format!("horizon = {} must be positive", self.horizon)));
        }
        self.model.fill_defaults().map_err(|e| invalid(e.to_string()))?;
        let model = self.model.build().map_err(|e| invalid(e.to_string()))?;
        let d = model.dim;
        let r = &mut self.run;
        if r.n_sweep.is_empty() {
            r.n_sweep = vec![r.n];
        }
        if r.alpha.is_empty() {
            r.alpha = vec![0.0; d];
        }
        if r.x_grid.is_empty() {
            r.x_grid = vec![model.x0.clone()];
        }
        if r.beta_grid.is_empty() {
            r.beta_grid = if d == 1 {
                (0..=20).map(|i| vec![i as f64 * 0.05]).collect()
            } else {
                vec![crate::sim::g_bar(&model, &model.x0).map_err(|e| invalid(e.to_string()))?]
            };
        }
        if r.alpha_grid.is_empty() {
            r.alpha_grid = vec![vec![0.0; d]];
            for i in 0..d {
                for s in [-1.0, 1.0] {
                    let mut a = vec![0.0; d];
                    a[i] = s;
                    r.alpha_grid.push(a);
                }
            }
        }
        let dims = [("alpha", r.alpha.len())]
            .into_iter()
            .chain(r.x_grid.iter().map(|x| ("x_grid", x.len())))
            .chain(r.beta_grid.iter().map(|x| ("beta_grid", x.len())))
            .chain(r.alpha_grid.iter().map(|x| ("alpha_grid", x.len())));
        for (name, len) in dims {
            if len != d {
                return Err(invalid(format!("run.{name} entries must have length {d}, found {len}")));
            }
        }
        if !r.end.is_empty() && r.end.len() != d {
            return Err(invalid(format!("run.end must be empty or have length {d}")));
        }
        if r.samples == 0 || r.segments == 0 || r.nodes == 0 || r.batches < 2 {
            return Err(invalid("run.samples, run.segments, run.nodes must be positive and run.batches >= 2".into()));
        }
        if !(r.ode_dt > 0.0 && r.ode_dt.is_finite()) {
            return Err(invalid(format!("run.ode_dt = {} must be positive", r.ode_dt)));
        }
        if !(r.radius > 0.0) || !(r.bound > 0.0) {
            return Err(invalid("run.radius and run.bound must be positive".into()));
        }
        Ok(self)
    }
}

/// Set a dotted key inside a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.into(), "expected key=value".into()))?;
    let key = key.trim();
    let raw = raw.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(assignment.into(), "empty key segment".into()));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cursor = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cursor.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(assignment.into(), format!("`{p}` is not a table")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ModelSpec {
    pub fn builder_name(&self) -> &'static str {
        match self {
            ModelSpec::Bernoulli { .. } => "bernoulli",
            ModelSpec::Iid { .. } => "iid",
            ModelSpec::TwoState { .. } => "two_state",
            ModelSpec::StateDependentTwoState { .. } => "state_dependent_two_state",
            ModelSpec::GridMatrices { .. } => "grid_matrices",
            ModelSpec::SgdLogistic { .. } => "sgd_logistic",
            ModelSpec::Rbm { .. } => "rbm",
            ModelSpec::WangLandau { .. } => "wang_landau",
            ModelSpec::Multicanonical { .. } => "multicanonical",
            ModelSpec::FreeEnergy { .. } => "free_energy",
            ModelSpec::Gaussian { .. } => "gaussian",
        }
    }

    fn fill_defaults(&mut self) -> Result<()> {
        match self {
            ModelSpec::SgdLogistic { inputs, intercept, x0, .. } if x0.is_empty() => {
                let width = inputs.first().map(Vec::len).unwrap_or(0);
                *x0 = vec![0.0; width + *intercept as usize];
            }
            ModelSpec::Rbm { visible, hidden, preset_seed, weights, bias_v, bias_h, data }
                if weights.is_empty() && bias_v.is_empty() && bias_h.is_empty() && data.is_empty() =>
            {
                if *visible + *hidden > models::RBM_MAX_UNITS {
                    return Err(Error::InvalidInput(format!("RBM with {} units is too large", *visible + *hidden)));
                }
                let p = models::rbm_preset(*visible, *hidden, *preset_seed)?;
                *weights = p.weights;
                *bias_v = p.bias_v;
                *bias_h = p.bias_h;
                *data = p.data;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn rbm_spec(&self) -> Option<RbmSpec> {
        match self {
            ModelSpec::Rbm { visible, hidden, weights, bias_v, bias_h, data, .. } => Some(RbmSpec {
                visible: *visible,
                hidden: *hidden,
                weights: weights.clone(),
                bias_v: bias_v.clone(),
                bias_h: bias_h.clone(),
                data: data.clone(),
            }),
            _ => None,
        }
    }

    pub fn logistic_dataset(&self) -> Option<Result<LogisticDataset>> {
        match self {
            ModelSpec::SgdLogistic { inputs, labels, intercept, .. } => Some(LogisticDataset::new(
                inputs.clone(),
                labels.clone(),
                if *intercept { FeatureMap::Intercept } else { FeatureMap::Identity },
            )),
            _ => None,
        }
    }

    /// Wang-Landau strata with their exact targets: stratum masses, and for
    /// the free-energy preset the enumerated `F(ω_i) − F(ω_1)`.
    pub fn wang_landau(&self) -> Option<Result<(WangLandauSpec, Vec<f64>, Option<Vec<f64>>)>> {
        let build = || -> Result<(WangLandauSpec, Vec<f64>, Option<Vec<f64>>)> {
            match self {
                ModelSpec::WangLandau { strata, local_move } => {
                    if strata.iter().map(Vec::len).sum::<usize>() > MAX_NOISE_STATES {
                        return Err(Error::InvalidInput("too many Wang-Landau states".into()));
                    }
                    let spec = WangLandauSpec::new(strata.clone())?.with_local_move(*local_move)?;
                    let masses = spec.targets();
                    Ok((spec, masses, None))
                }
                ModelSpec::Multicanonical { sites, coupling, cuts, local_move } => {
                    check_ring(*sites)?;
                    let (spec, masses) = models::multicanonical_ring(*sites, *coupling, cuts)?;
                    Ok((spec.with_local_move(*local_move)?, masses, None))
                }
                ModelSpec::FreeEnergy { sites, betas, local_move } => {
                    check_ring(*sites)?;
                    if betas.len() * (1usize << *sites) > MAX_NOISE_STATES {
                        return Err(Error::InvalidInput("too many Wang-Landau states".into()));
                    }
                    let (spec, diffs) = models::free_energy_ring(*sites, betas)?;
                    let masses = spec.targets();
                    Ok((spec.with_local_move(*local_move)?, masses, Some(diffs)))
                }
                _ => unreachable!(),
            }
        };
        match self {
            ModelSpec::WangLandau { .. } | ModelSpec::Multicanonical { .. } | ModelSpec::FreeEnergy { .. } => {
                Some(build())
            }
            _ => None,
        }
    }

    pub fn build(&self) -> Result<SaModel> {
        let too_many = |n: usize| {
            if n > MAX_NOISE_STATES {
                Err(Error::InvalidInput(format!("{n} noise states exceed the limit {MAX_NOISE_STATES}")))
            } else {
                Ok(())
            }
        };
        match self {
            ModelSpec::Bernoulli { p, x0 } => models::bernoulli(*p, *x0),
            ModelSpec::Iid { probabilities, values, relax, x0 } => {
                too_many(probabilities.len())?;
                models::iid(probabilities.clone(), values.clone(), *relax, x0.clone())
            }
            ModelSpec::TwoState { a, b, values, relax, x0 } => models::two_state(*a, *b, *values, *relax, *x0),
            ModelSpec::StateDependentTwoState { lo, hi, values, relax, x0 } => {
                models::state_dependent_two_state(*lo, *hi, *values, *relax, *x0)
            }
            ModelSpec::GridMatrices { grid, matrices, values, relax, x0 } => {
                too_many(values.len())?;
                if matrices.iter().any(|m| m.len() > MAX_NOISE_STATES) {
                    return Err(Error::InvalidInput("grid matrix too large".into()));
                }
                let mats = matrices.iter().map(|m| rows_to_matrix(m)).collect::<Result<Vec<_>, _>>()?;
                let kernel = InterpolatedKernel::new(grid.clone(), mats)?;
                let update = AffineUpdate::new(values.clone(), *relax)?;
                if update.len() != kernel_size(&kernel) {
                    return Err(Error::InvalidInput("one update row per noise point is required".into()));
                }
                SaModel::finite("grid_matrices", Arc::new(kernel), Arc::new(update), x0.clone(), 0)
            }
            ModelSpec::SgdLogistic { x0, .. } => {
                let data = self.logistic_dataset().expect("logistic spec")?;
                too_many(data.len())?;
                models::sgd_logistic_model(&data, x0.clone())
            }
            ModelSpec::Rbm { .. } => models::rbm_model(&self.rbm_spec().expect("rbm spec")),
            ModelSpec::WangLandau { .. } | ModelSpec::Multicanonical { .. } | ModelSpec::FreeEnergy { .. } => {
                let (spec, _, _) = self.wang_landau().expect("wang-landau spec")?;
                models::wang_landau_model(Arc::new(spec))
            }
            ModelSpec::Gaussian { offset, relax, sigma, x0 } => {
                models::gaussian(offset.clone(), *relax, *sigma, x0.clone())
            }
        }
    }
}

fn kernel_size(k: &InterpolatedKernel) -> usize {
    use crate::kernel::StateKernel;
    k.size()
}

fn check_ring(sites: usize) -> Result<()> {
    if sites > MAX_RING_SITES {
        return Err(Error::InvalidInput(format!("ring size {sites} exceeds {MAX_RING_SITES}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BERN: &str = "seed = 3\n[model]\nbuilder = \"bernoulli\"\n";

    #[test]
    fn defaults_become_explicit_and_round_trip() {
        let cfg = ExperimentConfig::parse(BERN).unwrap();
        assert_eq!(cfg.schedule, StepKind::Harmonic);
        assert_eq!(cfg.run.alpha, vec![0.0]);
        assert_eq!(cfg.run.beta_grid.len(), 21);
        assert!(cfg.run.beta_grid.iter().any(|b| (b[0] - 0.75).abs() < 1e-15));
        let echo = cfg.to_toml();
        assert!(echo.contains("builder = \"bernoulli\""));
        assert!(echo.contains("n_sweep"));
        let again = ExperimentConfig::parse(&echo).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
    }

    #[test]
    fn overrides_and_errors() {
        let cfg = ExperimentConfig::parse_with_overrides(
            BERN,
            &["run.n=50".into(), "model.x0 = 0.25".into(), "schedule.kind=polynomial".into(), "schedule.rho=0.6".into()],
        )
        .unwrap();
        assert_eq!(cfg.run.n, 50);
        assert_eq!(cfg.schedule, StepKind::Polynomial { rho: 0.6 });
        assert!(matches!(cfg.model, ModelSpec::Bernoulli { x0, .. } if x0 == 0.25));
        assert_ne!(cfg.hash(), ExperimentConfig::parse(BERN).unwrap().hash());
        assert!(ExperimentConfig::parse("[model]\nbuilder = \"nope\"\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nbuilder = \"bernoulli\"\nq = 1\n").is_err());
        assert!(ExperimentConfig::parse("horizon = -1\n[model]\nbuilder = \"bernoulli\"\n").is_err());
        assert!(ExperimentConfig::parse_with_overrides(BERN, &["seed".into()]).is_err());
        assert!(ExperimentConfig::parse_with_overrides(BERN, &["seed.x=1".into()]).is_err());
        assert!(ExperimentConfig::parse("[model]\nbuilder = \"bernoulli\"\n[run]\nalpha = [1.0, 2.0]\n").is_err());
        assert!(ExperimentConfig::parse_with_overrides(BERN, &[format!("seed={}", u64::MAX)]).is_err());
    }

    #[test]
    fn every_builder_parses() {
        let docs = [
            "[model]\nbuilder = \"iid\"\nprobabilities = [0.2, 0.8]\nvalues = [[1.0], [-1.0]]\nx0 = [0.0]\n",
            "[model]\nbuilder = \"two_state\"\na = 0.3\nb = 0.2\n",
            "[model]\nbuilder = \"state_dependent_two_state\"\nlo = 0.1\nhi = 0.6\n",
            "[model]\nbuilder = \"grid_matrices\"\ngrid = [0.0, 1.0]\nmatrices = [[[0.5, 0.5], [0.5, 0.5]], [[0.9, 0.1], [0.2, 0.8]]]\nvalues = [[0.0], [1.0]]\nx0 = [0.0]\n",
            "[model]\nbuilder = \"sgd_logistic\"\ninputs = [[1.0], [-1.0]]\nlabels = [1.0, -1.0]\nintercept = true\n",
            "[model]\nbuilder = \"rbm\"\n",
            "[model]\nbuilder = \"wang_landau\"\nstrata = [[1.0, 2.0], [3.0]]\n",
            "[model]\nbuilder = \"multicanonical\"\n",
            "[model]\nbuilder = \"free_energy\"\n",
            "[model]\nbuilder = \"gaussian\"\noffset = [0.5]\nsigma = 1.0\nx0 = [0.0]\n",
        ];
        for doc in docs {
            let cfg = ExperimentConfig::parse(doc).unwrap_or_else(|e| panic!("{doc}: {e}"));
            let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
            assert_eq!(again, cfg);
            let m = cfg.build_model().unwrap();
            assert_eq!(m.x0.len(), m.dim);
        }
        let rbm = ExperimentConfig::parse(docs[5]).unwrap();
        assert_eq!(rbm.build_model().unwrap().dim, 15);
        assert!(ExperimentConfig::parse("[model]\nbuilder = \"rbm\"\nvisible = 9\nhidden = 9\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nbuilder = \"multicanonical\"\nsites = 30\n").is_err());
    }

    proptest! {
        #[test]
        fn numeric_round_trip(seed in 0..=i64::MAX as u64, p in 0.01f64..0.99, x0 in -5.0f64..5.0, n in 1usize..100_000, t in 0.01f64..10.0) {
            let doc = format!("seed = {seed}\nhorizon = {t:?}\n[model]\nbuilder = \"bernoulli\"\np = {p:?}\nx0 = {x0:?}\n[run]\nn = {n}\n");
            let cfg = ExperimentConfig::parse(&doc).unwrap();
            prop_assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        }
    }
}
