//! Euler–Maruyama simulation of `dX_t = −b_θ(X_t) dt + dW_t` on a uniform grid.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::model::{DriftModel, ModelError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("simulation diverged: non-finite state at {phase} step {step}")]
    Diverged { phase: &'static str, step: usize },
    #[error("empty or out-of-range window [{a}, {b}]")]
    EmptyWindow { a: f64, b: f64 },
    #[error("stationary initial law unavailable: {0}")]
    NoStationaryLaw(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("path csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How `X_0` is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Start exactly here, no burn-in.
    Explicit(Vec<f64>),
    /// Start at the origin and discard `burn_in` time units.
    BurnedIn,
    /// OU family only: draw `X_0 ~ N(0, Σ)` with `AΣ + ΣAᵀ = I`.
    OuStationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub steps_per_unit: usize,
    pub seed: u64,
    pub burn_in: f64,
    pub x0: InitialState,
    /// Keep the Brownian increments of the observed window.
    pub retain_increments: bool,
    /// Test hook: replace every Brownian increment by zero.
    pub zero_noise: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 20.0,
            steps_per_unit: 100,
            seed: 0,
            burn_in: 10.0,
            x0: InitialState::BurnedIn,
            retain_increments: true,
            zero_noise: false,
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_unit as f64
    }

    /// `N = round(T · steps_per_unit)`.
    pub fn step_count(&self) -> usize {
        (self.horizon * self.steps_per_unit as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::InvalidConfig(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.steps_per_unit == 0 {
            return Err(SimError::InvalidConfig("steps_per_unit must be at least 1".into()));
        }
        if self.step_count() == 0 {
            return Err(SimError::InvalidConfig("horizon shorter than one grid step".into()));
        }
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(SimError::InvalidConfig(format!("burn_in must be nonnegative, got {}", self.burn_in)));
        }
        Ok(())
    }
}

/// A discretely observed path on a uniform grid.
///
/// Grid point `i` sits at time `(start_index + i) · dt`, so windows cut out
/// with [`subpath`] report times on the original clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPath {
    d: usize,
    dt: f64,
    start_index: usize,
    states: Vec<f64>,
    increments: Option<Vec<f64>>,
}

impl ObservedPath {
    /// Builds a path from row-major states `(N+1) × d` and optional increments `N × d`.
    pub fn new(
        d: usize,
        dt: f64,
        start_index: usize,
        states: Vec<f64>,
        increments: Option<Vec<f64>>,
    ) -> Result<Self, SimError> {
        if d == 0 || !states.len().is_multiple_of(d) || states.len() / d < 2 {
            return Err(SimError::InvalidConfig("path needs at least two grid points".into()));
        }
        if !(dt > 0.0) {
            return Err(SimError::InvalidConfig("dt must be positive".into()));
        }
        let n = states.len() / d - 1;
        if let Some(w) = &increments {
            if w.len() != n * d {
                return Err(SimError::InvalidConfig(format!(
                    "increments have {} entries, expected {}",
                    w.len(),
                    n * d
                )));
            }
        }
        Ok(Self {
            d,
            dt,
            start_index,
            states,
            increments,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of increments `N`.
    pub fn steps(&self) -> usize {
        self.states.len() / self.d - 1
    }

    /// Window length `N · Δ`.
    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn start_time(&self) -> f64 {
        self.time(0)
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn time(&self, i: usize) -> f64 {
        (self.start_index + i) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|i| self.time(i)).collect()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.d..(i + 1) * self.d]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn increment(&self, i: usize) -> Option<&[f64]> {
        self.increments.as_ref().map(|w| &w[i * self.d..(i + 1) * self.d])
    }

    pub fn increments(&self) -> Option<&[f64]> {
        self.increments.as_deref()
    }

    pub fn has_increments(&self) -> bool {
        self.increments.is_some()
    }

    pub fn without_increments(mut self) -> Self {
        self.increments = None;
        self
    }
}

/// Simulates trial 0 of the configured seed.
pub fn simulate(model: &DriftModel, theta: &[f64], cfg: &SimConfig) -> Result<ObservedPath, SimError> {
    simulate_trial(model, theta, cfg, 0)
}

/// Per-trial RNG: ChaCha20 keyed by `seed`, stream selected by `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Euler–Maruyama path for Monte Carlo trial `trial`; independent of any
/// other trial and of scheduling.
pub fn simulate_trial(
    model: &DriftModel,
    theta: &[f64],
    cfg: &SimConfig,
    trial: u64,
) -> Result<ObservedPath, SimError> {
    cfg.validate()?;
    let d = model.state_dim();
    model.check_dims(theta, &vec![0.0; d])?;
    let dt = cfg.dt();
    let sd = dt.sqrt();
    let mut rng = trial_rng(cfg.seed, trial);

    let mut x = match &cfg.x0 {
        InitialState::Explicit(v) => {
            if v.len() != d {
                return Err(SimError::InvalidConfig(format!("x0 has length {}, expected {d}", v.len())));
            }
            v.clone()
        }
        InitialState::BurnedIn => vec![0.0; d],
        InitialState::OuStationary => ou_stationary_draw(model, theta, &mut rng)?,
    };

    let mut b = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let fill_noise = |rng: &mut ChaCha20Rng, noise: &mut [f64]| {
        for w in noise.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = if cfg.zero_noise { 0.0 } else { sd * z };
        }
    };

    if cfg.x0 == InitialState::BurnedIn {
        let n_burn = (cfg.burn_in * cfg.steps_per_unit as f64).round() as usize;
        for step in 0..n_burn {
            model.drift_into(theta, &x, &mut b);
            fill_noise(&mut rng, &mut noise);
            for k in 0..d {
                x[k] = (x[k] - b[k] * dt) + noise[k];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SimError::Diverged { phase: "burn-in", step });
            }
        }
    }

    let n = cfg.step_count();
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(&x);
    let mut increments = cfg.retain_increments.then(|| Vec::with_capacity(n * d));
    for step in 0..n {
        let cur = step * d;
        model.drift_into(theta, &states[cur..cur + d], &mut b);
        fill_noise(&mut rng, &mut noise);
        for k in 0..d {
            let xk = states[cur + k];
            let next = (xk - b[k] * dt) + noise[k];
            states.push(next);
            if let Some(w) = increments.as_mut() {
                // stored so that X_{i+1} − X_i + b(X_i)Δ reproduces it bit-for-bit
                w.push((next - xk) + b[k] * dt);
            }
        }
        if states[cur + d..].iter().any(|v| !v.is_finite()) {
            return Err(SimError::Diverged { phase: "observation", step });
        }
    }
    ObservedPath::new(d, dt, 0, states, increments)
}

/// Solves the Lyapunov equation `AΣ + ΣAᵀ = I` for the OU stationary covariance.
pub fn ou_stationary_covariance(a: &DMatrix<f64>) -> Result<DMatrix<f64>, SimError> {
    let d = a.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let sys = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = DVector::from_column_slice(eye.as_slice());
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SimError::NoStationaryLaw("Lyapunov system is singular".into()))?;
    let sigma = DMatrix::from_column_slice(d, d, sol.as_slice());
    Ok((&sigma + sigma.transpose()) * 0.5)
}

fn ou_stationary_draw(model: &DriftModel, theta: &[f64], rng: &mut ChaCha20Rng) -> Result<Vec<f64>, SimError> {
    let d = match model {
        DriftModel::OrnsteinUhlenbeck { d } => *d,
        _ => {
            return Err(SimError::NoStationaryLaw(
                "exact stationary start is only available for the OU family".into(),
            ))
        }
    };
    let a = DMatrix::from_column_slice(d, d, theta);
    if a.complex_eigenvalues().iter().any(|ev| ev.re <= 0.0) {
        return Err(SimError::NoStationaryLaw("A has an eigenvalue with nonpositive real part".into()));
    }
    let sigma = ou_stationary_covariance(&a)?;
    let chol = sigma
        .cholesky()
        .ok_or_else(|| SimError::NoStationaryLaw("stationary covariance is not positive definite".into()))?;
    let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
    Ok((chol.l() * z).as_slice().to_vec())
}

/// Restriction of `path` to `[a, b]` (absolute clock, rounded to the grid).
pub fn subpath(path: &ObservedPath, a: f64, b: f64) -> Result<ObservedPath, SimError> {
    let to_local = |t: f64| (t / path.dt).round() as i64 - path.start_index as i64;
    let (ia, ib) = (to_local(a), to_local(b));
    if !(a < b) || ia < 0 || ib as usize > path.steps() || ia >= ib {
        return Err(SimError::EmptyWindow { a, b });
    }
    let (ia, ib) = (ia as usize, ib as usize);
    let d = path.d;
    let states = path.states[ia * d..(ib + 1) * d].to_vec();
    let increments = path.increments.as_ref().map(|w| w[ia * d..ib * d].to_vec());
    ObservedPath::new(d, path.dt, path.start_index + ia, states, increments)
}

/// Writes `t,x1..xd[,dw1..dwd]`, one row per grid point; increment columns
/// are empty on the last row.
pub fn write_path_csv<W: Write>(path: &ObservedPath, mut out: W) -> Result<(), SimError> {
    let d = path.d;
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    if path.has_increments() {
        header.extend((1..=d).map(|k| format!("dw{k}")));
    }
    writeln!(out, "{}", header.join(","))?;
    let n = path.steps();
    for i in 0..=n {
        let mut row = vec![format!("{}", path.time(i))];
        row.extend(path.state(i).iter().map(|v| format!("{v}")));
        if path.has_increments() {
            if i < n {
                row.extend(path.increment(i).unwrap().iter().map(|v| format!("{v}")));
            } else {
                row.extend(std::iter::repeat_n(String::new(), d));
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a path written by [`write_path_csv`]. `dt` is inferred from the
/// time column unless given.
pub fn read_path_csv<R: BufRead>(input: R, dt: Option<f64>) -> Result<ObservedPath, SimError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| SimError::Csv("empty file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"t") {
        return Err(SimError::Csv("first column must be `t`".into()));
    }
    let d = cols.iter().filter(|c| c.starts_with('x')).count();
    let with_dw = cols.iter().any(|c| c.starts_with("dw"));
    if d == 0 || cols.len() != 1 + d + if with_dw { d } else { 0 } {
        return Err(SimError::Csv(format!("unexpected header `{header}`")));
    }
    let parse = |s: &str, line: usize| -> Result<f64, SimError> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| SimError::Csv(format!("line {line}: {e}")))
    };
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut incs = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    for l in lines {
        let l = l?;
        if !l.trim().is_empty() {
            rows.push(l);
        }
    }
    let last = rows.len().saturating_sub(1);
    for (r, l) in rows.iter().enumerate() {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != cols.len() {
            return Err(SimError::Csv(format!("line {}: expected {} fields", r + 2, cols.len())));
        }
        times.push(parse(f[0], r + 2)?);
        for s in &f[1..=d] {
            states.push(parse(s, r + 2)?);
        }
        if with_dw && r < last {
            for s in &f[1 + d..] {
                incs.push(parse(s, r + 2)?);
            }
        }
    }
    if times.len() < 2 {
        return Err(SimError::Csv("need at least two rows".into()));
    }
    let n = times.len() - 1;
    let dt = dt.unwrap_or((times[n] - times[0]) / n as f64);
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(SimError::Csv("time grid is not uniform".into()));
        }
    }
    let start_index = (times[0] / dt).round() as usize;
    ObservedPath::new(d, dt, start_index, states, with_dw.then_some(incs))
}
