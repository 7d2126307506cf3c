//! Run configuration: a TOML file with `model`, `sim`, `solver`,
//! `lambda_grid`, `experiment` and `bounds` tables. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimators::{CvOptions, SolverConfig, ValidationWindow};
use crate::model::{DriftModel, LinearBasis, LogCoshPotential};
use crate::sim::{InitialState, SimConfig};
use crate::theory::{default_big_l, BoundInputs};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialise config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    OrnsteinUhlenbeck,
    SineQuadratic,
    /// `b(x) = (baseline · I + diag θ) x`, so `p = d`.
    LinearDiagonal,
    /// Gradient drift of `V(x) = Σ x_i²/2 + log cosh(θ_i x_i)`.
    LangevinLogcosh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub family: Family,
    pub d: usize,
    /// Only used by `linear_diagonal`.
    pub baseline: f64,
    /// True parameter; generated per trial when absent.
    pub theta: Option<Vec<f64>>,
    /// Fraction of nonzero entries of a generated parameter.
    pub sparsity: f64,
    /// Number of nonzeros of a generated parameter; overrides `sparsity`.
    pub nonzeros: Option<usize>,
    /// Nonzero magnitudes are uniform on `[lo, hi]` with a random sign.
    pub magnitude: [f64; 2],
    /// Generated parameters are redrawn until the linearised drift has all
    /// eigenvalue real parts above this margin.
    pub stability_margin: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            family: Family::SineQuadratic,
            d: 10,
            baseline: 1.0,
            theta: None,
            sparsity: 0.35,
            nonzeros: None,
            magnitude: [0.5, 2.0],
            stability_margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    BurnIn,
    Stationary,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimBlock {
    pub horizon: f64,
    pub steps_per_unit: usize,
    pub seed: u64,
    pub burn_in: f64,
    pub initial: InitialMode,
    pub x0: Option<Vec<f64>>,
    /// Read the observed path from this CSV instead of simulating (`fit`, `cv`).
    pub path_file: Option<String>,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            horizon: 20.0,
            steps_per_unit: 100,
            seed: 0,
            burn_in: 10.0,
            initial: InitialMode::BurnIn,
            x0: None,
            path_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub max_iter: usize,
    pub tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub acceleration: bool,
    pub multi_start: usize,
    pub multi_start_scale: f64,
    pub newton_steps: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            max_iter: s.max_iter,
            tol: s.tol,
            initial_step: s.initial_step,
            shrink: s.shrink,
            sufficient_decrease: s.sufficient_decrease,
            acceleration: s.acceleration,
            multi_start: s.multi_start,
            multi_start_scale: s.multi_start_scale,
            newton_steps: s.newton_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// Hold-out cross-validation over the grid.
    Cv,
    /// `λ = theory_constant · sqrt(log p / T)`.
    Theory,
    /// `λ = value`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowChoice {
    Last10,
    Last20,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaGridBlock {
    pub rule: LambdaRule,
    /// Grid top; `λ_max` of the training window when absent.
    pub max: Option<f64>,
    /// Grid bottom; `max · min_ratio` when absent.
    pub min: Option<f64>,
    pub min_ratio: f64,
    pub count: usize,
    pub value: Option<f64>,
    pub theory_constant: f64,
    pub train_fraction: f64,
    pub validation_window: WindowChoice,
    /// Refit the Lasso on the whole path at the selected λ.
    pub refit_full: bool,
}

impl Default for LambdaGridBlock {
    fn default() -> Self {
        Self {
            rule: LambdaRule::Cv,
            max: None,
            min: None,
            min_ratio: 1e-3,
            count: 30,
            value: None,
            theory_constant: 2.0,
            train_fraction: 0.8,
            validation_window: WindowChoice::Last10,
            refit_full: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentBlock {
    pub name: String,
    pub trials: usize,
    pub output_dir: String,
    pub zero_tol: f64,
    /// Horizons swept by `scaling-study`.
    pub horizons: Vec<f64>,
    /// Parameter dimensions swept at the largest horizon by `scaling-study`.
    pub p_sweep: Vec<usize>,
    /// `verify`: concentration grid, trial count and horizon.
    pub mu_grid: Vec<f64>,
    pub concentration_trials: usize,
    pub concentration_horizon: f64,
    /// Centre time averages at the pooled mean instead of the closed-form mean.
    pub concentration_pooled: bool,
    /// `verify` exits with code 4 if a frequency falls below these.
    pub basic_min_frequency: f64,
    pub oracle_min_frequency: f64,
    /// Number of cone directions for the restricted eigenvalue estimate.
    pub re_directions: usize,
    /// Also fit the adaptive Lasso (pilot = Lasso estimate) in `fit` and `figure1`.
    pub adaptive: bool,
    pub adaptive_alpha: f64,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            name: "run".into(),
            trials: 1,
            output_dir: "out".into(),
            zero_tol: 1e-8,
            horizons: vec![25.0, 50.0, 100.0, 200.0, 400.0],
            p_sweep: Vec::new(),
            mu_grid: vec![0.5, 1.0, 2.0],
            concentration_trials: 2000,
            concentration_horizon: 50.0,
            concentration_pooled: true,
            basic_min_frequency: 1.0,
            oracle_min_frequency: 0.0,
            re_directions: 200,
            adaptive: false,
            adaptive_alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsBlock {
    pub gamma: f64,
    /// Restricted eigenvalue constant; estimated from the data when absent.
    pub k: Option<f64>,
    pub l_min: f64,
    pub epsilon: f64,
    pub epsilon0: Option<f64>,
    pub c: f64,
    pub big_l: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub gamma_43: f64,
    pub gamma_2: f64,
    pub c0: Option<f64>,
    pub m_inf: f64,
}

impl Default for BoundsBlock {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            k: None,
            l_min: 1.0,
            epsilon: 0.05,
            epsilon0: None,
            c: 1.0,
            big_l: default_big_l(),
            delta1: 1.0,
            delta2: 1.0,
            gamma_43: 0.0,
            gamma_2: 0.0,
            c0: None,
            m_inf: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub sim: SimBlock,
    pub solver: SolverBlock,
    pub lambda_grid: LambdaGridBlock,
    pub experiment: ExperimentBlock,
    pub bounds: BoundsBlock,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML of the fully resolved configuration.
    pub fn resolved_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the resolved TOML, hex encoded. The output directory is
    /// blanked first so that relocating a run does not change its identity.
    pub fn hash(&self) -> Result<String, ConfigError> {
        let mut c = self.clone();
        c.experiment.output_dir.clear();
        Ok(hex::encode(Sha256::digest(c.resolved_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if m.d == 0 {
            return invalid("model.d must be positive");
        }
        if !(0.0..=1.0).contains(&m.sparsity) {
            return invalid("model.sparsity must lie in [0, 1]");
        }
        let [lo, hi] = m.magnitude;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return invalid("model.magnitude must satisfy 0 < lo <= hi");
        }
        if let Some(nz) = m.nonzeros {
            if nz > self.param_dim() {
                return invalid(format!("model.nonzeros = {nz} exceeds p = {}", self.param_dim()));
            }
        }
        if let Some(t) = &m.theta {
            if t.len() != self.param_dim() {
                return invalid(format!("model.theta has length {}, expected {}", t.len(), self.param_dim()));
            }
        }
        let s = &self.sim;
        if !(s.horizon > 0.0) || s.steps_per_unit == 0 {
            return invalid("sim.horizon and sim.steps_per_unit must be positive");
        }
        if s.initial == InitialMode::Explicit && s.x0.as_ref().map(Vec::len) != Some(m.d) {
            return invalid("sim.initial = \"explicit\" needs sim.x0 of length d");
        }
        if s.initial == InitialMode::Stationary && m.family != Family::OrnsteinUhlenbeck {
            return invalid("sim.initial = \"stationary\" is only available for ornstein_uhlenbeck");
        }
        self.solver_config(0)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let g = &self.lambda_grid;
        if g.count == 0 {
            return invalid("lambda_grid.count must be positive");
        }
        if !(g.min_ratio > 0.0 && g.min_ratio <= 1.0) {
            return invalid("lambda_grid.min_ratio must lie in (0, 1]");
        }
        if !(g.train_fraction > 0.0 && g.train_fraction < 1.0) {
            return invalid("lambda_grid.train_fraction must lie in (0, 1)");
        }
        if g.rule == LambdaRule::Fixed && !g.value.is_some_and(|v| v >= 0.0) {
            return invalid("lambda_grid.rule = \"fixed\" needs a nonnegative lambda_grid.value");
        }
        let e = &self.experiment;
        if e.trials == 0 {
            return invalid("experiment.trials must be positive");
        }
        if e.horizons.iter().any(|t| !(*t > 0.0)) {
            return invalid("experiment.horizons must be positive");
        }
        if !(e.adaptive_alpha > 0.0) {
            return invalid("experiment.adaptive_alpha must be positive");
        }
        if !(self.bounds.gamma > 0.0) {
            return invalid("bounds.gamma must be positive");
        }
        Ok(())
    }

    pub fn param_dim(&self) -> usize {
        match self.model.family {
            Family::OrnsteinUhlenbeck | Family::SineQuadratic => self.model.d * self.model.d,
            Family::LinearDiagonal | Family::LangevinLogcosh => self.model.d,
        }
    }

    pub fn drift_model(&self) -> DriftModel {
        let d = self.model.d;
        match self.model.family {
            Family::OrnsteinUhlenbeck => DriftModel::ornstein_uhlenbeck(d),
            Family::SineQuadratic => DriftModel::sine_quadratic(d),
            Family::LinearDiagonal => DriftModel::general_linear(LinearBasis::diagonal(d, self.model.baseline)),
            Family::LangevinLogcosh => DriftModel::langevin(std::sync::Arc::new(LogCoshPotential { d })),
        }
    }

    pub fn sim_config(&self, horizon: f64) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            horizon,
            steps_per_unit: s.steps_per_unit,
            seed: s.seed,
            burn_in: s.burn_in,
            x0: match s.initial {
                InitialMode::BurnIn => InitialState::BurnedIn,
                InitialMode::Stationary => InitialState::OuStationary,
                InitialMode::Explicit => InitialState::Explicit(s.x0.clone().unwrap_or_default()),
            },
            retain_increments: true,
            zero_noise: false,
        }
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            max_iter: s.max_iter,
            tol: s.tol,
            initial_step: s.initial_step,
            shrink: s.shrink,
            sufficient_decrease: s.sufficient_decrease,
            acceleration: s.acceleration,
            multi_start: s.multi_start,
            multi_start_scale: s.multi_start_scale,
            newton_steps: s.newton_steps,
            seed,
        }
    }

    pub fn cv_options(&self, seed: u64) -> CvOptions {
        CvOptions {
            solver: self.solver_config(seed),
            train_fraction: self.lambda_grid.train_fraction,
            validation_window: match self.lambda_grid.validation_window {
                WindowChoice::Last10 => ValidationWindow::LastTenPercent,
                WindowChoice::Last20 => ValidationWindow::LastTwentyPercent,
            },
        }
    }

    pub fn bound_inputs(&self, s0: usize, horizon: f64, lambda: f64, k: f64) -> BoundInputs {
        let b = &self.bounds;
        BoundInputs {
            s0,
            p: self.param_dim(),
            horizon,
            lambda,
            gamma: b.gamma,
            k,
            l_min: b.l_min,
            epsilon: b.epsilon,
            epsilon0: b.epsilon0,
            c: b.c,
            big_l: b.big_l,
            delta1: b.delta1,
            delta2: b.delta2,
            gamma_43: b.gamma_43,
            gamma_2: b.gamma_2,
            c0: b.c0,
            m_inf: b.m_inf,
        }
    }
}
