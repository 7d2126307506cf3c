//! Command implementations behind the `driftlasso` binary. Each command
//! reads a [`RunConfig`], fans trials out over a fixed-size worker pool and
//! writes CSV tables plus `resolved_config.toml` and `run.json`.
//!
//! Trial `k` draws its true parameter from stream `PARAM_STREAM + k` and its
//! path from stream `k` of the configured seed, so outputs do not depend on
//! the number of workers.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, Family, LambdaRule, RunConfig};
use crate::estimators::{
    cross_validate_lambda, fit_adaptive_lasso, fit_lasso, fit_mle, lambda_max, CvResult, SolverError, SolverResult,
};
use crate::likelihood::{LikelihoodError, LikelihoodEvaluator};
use crate::model::DriftModel;
use crate::numeric::{linear_fit, log_spaced_desc, mean_and_se, median};
use crate::report::{ensure_dir, fmt_f64, write_resolved_config, CsvTable, ReportError, RunRecord};
use crate::sim::{read_path_csv, simulate_trial, subpath, trial_rng, write_path_csv, ObservedPath, SimError};
use crate::theory::{
    basic_inequality_check, concentration_mc, error_bound_calculators, lambda1_t1_calculators,
    oracle_inequality_check, ou_time_average_variance, re_constant_estimate, support_metrics, Centering,
    ConcentrationSpec, ConeSpec, SupportMetrics, TheoryError,
};

/// Stream offset for true-parameter generation.
pub const PARAM_STREAM: u64 = 1 << 62;
/// First trial index of the concentration Monte Carlo in `verify`.
pub const CONCENTRATION_STREAM: u64 = 1 << 32;

const MAX_GENERATION_ATTEMPTS: usize = 100_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Sim(SimError::InvalidConfig(_)) => 2,
            Self::Solver(SolverError::InvalidConfig(_) | SolverError::InvalidLambda(_)) => 2,
            Self::Theory(TheoryError::InvalidInput(_)) => 2,
            Self::Sim(SimError::Io(_) | SimError::Csv(_)) => 1,
            Self::Sim(_) | Self::Solver(_) | Self::Likelihood(_) | Self::Theory(_) => 3,
            Self::Report(_) | Self::Pool(_) => 1,
        }
    }
}

/// Command-line overrides, folded into the resolved configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub trials: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(s) = self.seed {
            cfg.sim.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.experiment.output_dir = d.display().to_string();
        }
        if let Some(t) = self.trials {
            cfg.experiment.trials = t;
        }
        cfg.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
    /// Checks whose frequency fell below the configured threshold.
    pub failed_checks: Vec<String>,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    hash: String,
    dir: PathBuf,
    files: Vec<String>,
}

impl<'a> Run<'a> {
    fn start(cfg: &'a RunConfig) -> Result<Self, ExperimentError> {
        let dir = PathBuf::from(&cfg.experiment.output_dir);
        ensure_dir(&dir)?;
        Ok(Self {
            cfg,
            hash: cfg.hash()?,
            dir,
            files: Vec::new(),
        })
    }

    fn table(&mut self, name: &str, t: &CsvTable) -> Result<(), ExperimentError> {
        t.write(&self.dir.join(name), &self.hash)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(ReportError::from)?;
        text.push('\n');
        fs::write(&path, text).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(
        mut self,
        command: &str,
        summary: serde_json::Value,
        failed_checks: Vec<String>,
    ) -> Result<Outcome, ExperimentError> {
        write_resolved_config(&self.dir, &self.cfg.resolved_toml()?)?;
        self.files.push("resolved_config.toml".into());
        let record = RunRecord {
            command: command.into(),
            name: self.cfg.experiment.name.clone(),
            config_hash: self.hash.clone(),
            seed: self.cfg.sim.seed,
            trials: self.cfg.experiment.trials,
            files: self.files.clone(),
            summary: summary.clone(),
        };
        record.write(&self.dir)?;
        self.files.push("run.json".into());
        Ok(Outcome {
            out_dir: self.dir,
            files: self.files,
            summary,
            failed_checks,
        })
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))
}

/// Runs `f` on every trial index in parallel and returns results in trial order.
fn par_trials<T, F>(threads: usize, trials: usize, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(usize) -> Result<T, ExperimentError> + Sync + Send,
{
    pool(threads)?.install(|| (0..trials).into_par_iter().map(f).collect())
}

fn matrix_shape(cfg: &RunConfig) -> (usize, usize) {
    match cfg.model.family {
        Family::OrnsteinUhlenbeck | Family::SineQuadratic => (cfg.model.d, cfg.model.d),
        Family::LinearDiagonal | Family::LangevinLogcosh => (1, cfg.model.d),
    }
}

/// Real parts of the eigenvalues of the drift's linear part.
fn linear_part_spectrum(cfg: &RunConfig, theta: &[f64]) -> Vec<f64> {
    let d = cfg.model.d;
    match cfg.model.family {
        Family::OrnsteinUhlenbeck | Family::SineQuadratic => DMatrix::from_column_slice(d, d, theta)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .collect(),
        Family::LinearDiagonal => theta.iter().map(|t| cfg.model.baseline + t).collect(),
        Family::LangevinLogcosh => vec![1.0],
    }
}

/// Sparse true parameter for trial `trial`: the configured one, or a random
/// draw. Matrix families always carry a positive diagonal; all other
/// nonzeros are placed uniformly with magnitude uniform on `magnitude` and a
/// random sign. Draws are repeated until the linear part of the drift is
/// stable with the configured margin.
pub fn true_theta(cfg: &RunConfig, trial: u64) -> Result<Vec<f64>, ExperimentError> {
    if let Some(t) = &cfg.model.theta {
        return Ok(t.clone());
    }
    let p = cfg.param_dim();
    let d = cfg.model.d;
    let nnz = cfg
        .model
        .nonzeros
        .unwrap_or_else(|| (cfg.model.sparsity * p as f64).round() as usize)
        .min(p);
    let [lo, hi] = cfg.model.magnitude;
    let matrix = matches!(cfg.model.family, Family::OrnsteinUhlenbeck | Family::SineQuadratic);
    if matrix && nnz < d {
        // some row of A would vanish, so A is singular and never stable
        return Err(ConfigError::Invalid(format!("{nnz} nonzeros cannot give a stable {d}×{d} drift matrix")).into());
    }
    let mut rng = trial_rng(cfg.sim.seed, PARAM_STREAM + trial);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let mut theta = vec![0.0; p];
        let mut remaining = nnz;
        let mut free: Vec<usize> = (0..p).collect();
        if matrix && nnz >= d {
            for i in 0..d {
                theta[i * d + i] = rng.random_range(lo..=hi);
            }
            remaining -= d;
            free.retain(|j| j % (d + 1) != 0);
        }
        for k in sample(&mut rng, free.len(), remaining).into_vec() {
            let mag = rng.random_range(lo..=hi);
            theta[free[k]] = if rng.random_bool(0.5) { mag } else { -mag };
        }
        let spectrum = linear_part_spectrum(cfg, &theta);
        if spectrum.iter().all(|re| *re > cfg.model.stability_margin) {
            return Ok(theta);
        }
    }
    Err(ConfigError::Invalid(format!(
        "no stable parameter with {nnz} nonzeros found in {MAX_GENERATION_ATTEMPTS} draws"
    ))
    .into())
}

fn simulate_for(cfg: &RunConfig, model: &DriftModel, theta0: &[f64], horizon: f64, trial: u64) -> Result<ObservedPath, ExperimentError> {
    Ok(simulate_trial(model, theta0, &cfg.sim_config(horizon), trial)?)
}

fn solver_seed(cfg: &RunConfig, trial: u64) -> u64 {
    cfg.sim.seed.wrapping_add(trial)
}

struct LambdaChoice {
    lambda: f64,
    cv: Option<CvResult>,
}

fn cv_grid(cfg: &RunConfig, model: &DriftModel, path: &ObservedPath) -> Result<Vec<f64>, ExperimentError> {
    let g = &cfg.lambda_grid;
    let hi = match g.max {
        Some(v) => v,
        None => {
            let t0 = path.start_time();
            let train = subpath(path, t0, t0 + g.train_fraction * path.horizon())?;
            lambda_max(&LikelihoodEvaluator::new(model, &train)?)?
        }
    };
    if hi <= 0.0 {
        return Ok(vec![0.0]);
    }
    let lo = g.min.unwrap_or(hi * g.min_ratio);
    Ok(log_spaced_desc(hi, lo.min(hi), g.count))
}

fn select_lambda(
    cfg: &RunConfig,
    model: &DriftModel,
    path: &ObservedPath,
    trial: u64,
    force_cv: bool,
) -> Result<LambdaChoice, ExperimentError> {
    let g = &cfg.lambda_grid;
    let rule = if force_cv { LambdaRule::Cv } else { g.rule };
    Ok(match rule {
        LambdaRule::Fixed => LambdaChoice {
            lambda: g.value.unwrap_or(0.0),
            cv: None,
        },
        LambdaRule::Theory => LambdaChoice {
            lambda: g.theory_constant * ((model.param_dim() as f64).ln().max(1.0) / path.horizon()).sqrt(),
            cv: None,
        },
        LambdaRule::Cv => {
            let grid = cv_grid(cfg, model, path)?;
            let cv = cross_validate_lambda(path, model, &grid, &cfg.cv_options(solver_seed(cfg, trial)))?;
            LambdaChoice {
                lambda: cv.lambda0,
                cv: Some(cv),
            }
        }
    })
}

/// Lasso at the selected λ, warm-started at the cross-validation estimate.
fn final_lasso(
    cfg: &RunConfig,
    model: &DriftModel,
    path: &ObservedPath,
    choice: &LambdaChoice,
    trial: u64,
) -> Result<SolverResult, ExperimentError> {
    let solver = cfg.solver_config(solver_seed(cfg, trial));
    let p = model.param_dim();
    let init = choice
        .cv
        .as_ref()
        .map_or_else(|| vec![0.0; p], |c| c.theta_at_lambda0.to_vec());
    if choice.cv.is_some() && !cfg.lambda_grid.refit_full {
        let t0 = path.start_time();
        let train = subpath(path, t0, t0 + cfg.lambda_grid.train_fraction * path.horizon())?;
        let ev = LikelihoodEvaluator::new(model, &train)?;
        return Ok(fit_lasso(&ev, choice.lambda, &solver, &init)?);
    }
    let ev = LikelihoodEvaluator::new(model, path)?;
    Ok(fit_lasso(&ev, choice.lambda, &solver, &init)?)
}

fn push_param_rows(t: &mut CsvTable, trial: usize, theta: &[f64], shape: (usize, usize)) {
    let (nrows, ncols) = shape;
    for i in 0..nrows {
        let mut row = vec![trial.to_string(), (i + 1).to_string()];
        row.extend((0..ncols).map(|j| fmt_f64(theta[j * nrows + i])));
        t.push(row);
    }
}

fn param_table(shape: (usize, usize)) -> CsvTable {
    let mut header = vec!["trial".to_string(), "row".to_string()];
    header.extend((1..=shape.1).map(|j| format!("c{j}")));
    CsvTable::new(header)
}

const METRIC_HEADER: [&str; 14] = [
    "trial",
    "estimator",
    "lambda",
    "objective",
    "converged",
    "iterations",
    "stationarity",
    "l1_err",
    "l2_err",
    "precision",
    "recall",
    "f1",
    "size_hat",
    "p",
];

fn metric_row(trial: usize, name: &str, lambda: f64, res: &SolverResult, m: Option<&SupportMetrics>, p: usize) -> Vec<String> {
    let mut row = vec![
        trial.to_string(),
        name.to_string(),
        fmt_f64(lambda),
        fmt_f64(res.objective()),
        res.converged.to_string(),
        res.iterations.to_string(),
        fmt_f64(res.stationarity_residual),
    ];
    match m {
        Some(m) => row.extend([
            fmt_f64(m.l1_err),
            fmt_f64(m.l2_err),
            fmt_f64(m.precision),
            fmt_f64(m.recall),
            fmt_f64(m.f1),
            m.size_hat.to_string(),
        ]),
        None => {
            row.extend(std::iter::repeat_n(String::new(), 5));
            row.push(res.theta_hat.l0(1e-8).to_string());
        }
    }
    row.push(p.to_string());
    row
}

/// `simulate`: one path CSV per trial plus the true parameters.
pub fn cmd_simulate(cfg: &RunConfig, threads: usize) -> Result<Outcome, ExperimentError> {
    let model = cfg.drift_model();
    let trials = cfg.experiment.trials;
    let mut run = Run::start(cfg)?;
    let paths = par_trials(threads, trials, |k| {
        let theta0 = true_theta(cfg, k as u64)?;
        let path = simulate_for(cfg, &model, &theta0, cfg.sim.horizon, k as u64)?;
        let mut buf = Vec::new();
        write_path_csv(&path, &mut buf)?;
        Ok((theta0, buf, path.steps()))
    })?;
    let shape = matrix_shape(cfg);
    let mut thetas = param_table(shape);
    for (k, (theta0, buf, _)) in paths.iter().enumerate() {
        let name = if trials == 1 { "path.csv".to_string() } else { format!("path_{k:04}.csv") };
        let file = run.dir.join(&name);
        fs::write(&file, buf).map_err(|source| ReportError::Io {
            path: file.display().to_string(),
            source,
        })?;
        run.files.push(name);
        push_param_rows(&mut thetas, k, theta0, shape);
    }
    run.table("theta0.csv", &thetas)?;
    let summary = json!({
        "steps": paths.first().map(|p| p.2),
        "dt": cfg.sim_config(cfg.sim.horizon).dt(),
        "family": model.family_name(),
    });
    run.finish("simulate", summary, Vec::new())
}

fn load_or_simulate(
    cfg: &RunConfig,
    model: &DriftModel,
    trial: u64,
) -> Result<(Option<Vec<f64>>, ObservedPath), ExperimentError> {
    match &cfg.sim.path_file {
        Some(file) => {
            let f = fs::File::open(file).map_err(SimError::Io)?;
            let path = read_path_csv(BufReader::new(f), Some(cfg.sim_config(cfg.sim.horizon).dt()))?;
            Ok((cfg.model.theta.clone(), path))
        }
        None => {
            let theta0 = true_theta(cfg, trial)?;
            let path = simulate_for(cfg, model, &theta0, cfg.sim.horizon, trial)?;
            Ok((Some(theta0), path))
        }
    }
}

struct FitTrial {
    theta0: Option<Vec<f64>>,
    lambda: f64,
    mle: SolverResult,
    lasso: SolverResult,
    adaptive: Option<SolverResult>,
}

fn fit_trial(cfg: &RunConfig, model: &DriftModel, trial: u64, force_cv: bool) -> Result<FitTrial, ExperimentError> {
    let (theta0, path) = load_or_simulate(cfg, model, trial)?;
    let ev = LikelihoodEvaluator::new(model, &path)?;
    let p = model.param_dim();
    let mle = fit_mle(&ev, &cfg.solver_config(solver_seed(cfg, trial)), &vec![0.0; p])?;
    let choice = select_lambda(cfg, model, &path, trial, force_cv)?;
    let lasso = final_lasso(cfg, model, &path, &choice, trial)?;
    // a zero pilot leaves nothing to reweight
    let adaptive = if cfg.experiment.adaptive && lasso.theta_hat.iter().any(|v| *v != 0.0) {
        let solver = cfg.solver_config(solver_seed(cfg, trial));
        Some(fit_adaptive_lasso(&ev, choice.lambda, cfg.experiment.adaptive_alpha, &lasso.theta_hat, &solver)?)
    } else {
        None
    };
    Ok(FitTrial {
        theta0,
        lambda: choice.lambda,
        mle,
        lasso,
        adaptive,
    })
}

fn effective_trials(cfg: &RunConfig) -> usize {
    if cfg.sim.path_file.is_some() {
        1
    } else {
        cfg.experiment.trials
    }
}

#[derive(Default)]
struct FitMetrics {
    mle: Vec<SupportMetrics>,
    lasso: Vec<SupportMetrics>,
    adaptive: Vec<SupportMetrics>,
}

fn write_fit_outputs(run: &mut Run<'_>, cfg: &RunConfig, fits: &[FitTrial]) -> Result<FitMetrics, ExperimentError> {
    let shape = matrix_shape(cfg);
    let p = cfg.param_dim();
    let zt = cfg.experiment.zero_tol;
    let (mut t0, mut tm, mut tl, mut ta) = (param_table(shape), param_table(shape), param_table(shape), param_table(shape));
    let mut metrics = CsvTable::new(METRIC_HEADER);
    let mut out = FitMetrics::default();
    for (k, f) in fits.iter().enumerate() {
        if let Some(th) = &f.theta0 {
            push_param_rows(&mut t0, k, th, shape);
        }
        let score = |r: &SolverResult| -> Result<Option<SupportMetrics>, ExperimentError> {
            Ok(match &f.theta0 {
                Some(th) => Some(support_metrics(&r.theta_hat, th, zt)?),
                None => None,
            })
        };
        push_param_rows(&mut tm, k, &f.mle.theta_hat, shape);
        push_param_rows(&mut tl, k, &f.lasso.theta_hat, shape);
        let (sm, sl) = (score(&f.mle)?, score(&f.lasso)?);
        metrics.push(metric_row(k, "mle", 0.0, &f.mle, sm.as_ref(), p));
        metrics.push(metric_row(k, "lasso", f.lambda, &f.lasso, sl.as_ref(), p));
        out.mle.extend(sm);
        out.lasso.extend(sl);
        if let Some(a) = &f.adaptive {
            push_param_rows(&mut ta, k, &a.theta_hat, shape);
            let sa = score(a)?;
            metrics.push(metric_row(k, "adaptive", f.lambda, a, sa.as_ref(), p));
            out.adaptive.extend(sa);
        }
    }
    if !t0.rows.is_empty() {
        run.table("theta0.csv", &t0)?;
    }
    run.table("mle.csv", &tm)?;
    run.table("lasso.csv", &tl)?;
    if !ta.rows.is_empty() {
        run.table("adaptive.csv", &ta)?;
    }
    run.table("metrics.csv", &metrics)?;
    Ok(out)
}

fn metric_summary(ms: &[SupportMetrics], res: &[&SolverResult], p: usize) -> serde_json::Value {
    let l2: Vec<f64> = ms.iter().map(|m| m.l2_err).collect();
    let f1: Vec<f64> = ms.iter().map(|m| m.f1).collect();
    let sizes: Vec<usize> = res.iter().map(|r| r.theta_hat.l0(1e-8)).collect();
    json!({
        "median_l2_err": if l2.is_empty() { None } else { Some(median(&l2)) },
        "median_f1": if f1.is_empty() { None } else { Some(median(&f1)) },
        "mean_f1": if f1.is_empty() { None } else { Some(mean_and_se(&f1).0) },
        "sparse_trials": sizes.iter().filter(|s| **s < p).count(),
        "full_support_trials": sizes.iter().filter(|s| **s == p).count(),
        "converged_trials": res.iter().filter(|r| r.converged).count(),
    })
}

fn fit_summary(cfg: &RunConfig, fits: &[FitTrial], m: &FitMetrics) -> serde_json::Value {
    let p = cfg.param_dim();
    let adaptive: Vec<&SolverResult> = fits.iter().filter_map(|f| f.adaptive.as_ref()).collect();
    json!({
        "p": p,
        "mle": metric_summary(&m.mle, &fits.iter().map(|f| &f.mle).collect::<Vec<_>>(), p),
        "lasso": metric_summary(&m.lasso, &fits.iter().map(|f| &f.lasso).collect::<Vec<_>>(), p),
        "adaptive": (!adaptive.is_empty()).then(|| metric_summary(&m.adaptive, &adaptive, p)),
        "lambda": fits.iter().map(|f| f.lambda).collect::<Vec<_>>(),
    })
}

/// Dense estimate plus explicit support for every fitted estimator.
fn estimate_records(cfg: &RunConfig, fits: &[FitTrial]) -> serde_json::Value {
    let zt = cfg.experiment.zero_tol;
    let record = |k: usize, name: &str, lambda: f64, r: &SolverResult| {
        json!({
            "trial": k,
            "estimator": name,
            "lambda": lambda,
            "converged": r.converged,
            "theta": r.theta_hat.as_slice(),
            "support": r.theta_hat.support(zt),
        })
    };
    let mut out = Vec::new();
    for (k, f) in fits.iter().enumerate() {
        out.push(record(k, "mle", 0.0, &f.mle));
        out.push(record(k, "lasso", f.lambda, &f.lasso));
        if let Some(a) = &f.adaptive {
            out.push(record(k, "adaptive", f.lambda, a));
        }
    }
    serde_json::Value::Array(out)
}

/// `fit`: MLE and Lasso (λ by the configured rule) per trial or on a path file.
pub fn cmd_fit(cfg: &RunConfig, threads: usize) -> Result<Outcome, ExperimentError> {
    let model = cfg.drift_model();
    let fits = par_trials(threads, effective_trials(cfg), |k| fit_trial(cfg, &model, k as u64, false))?;
    let mut run = Run::start(cfg)?;
    let metrics = write_fit_outputs(&mut run, cfg, &fits)?;
    run.json("estimates.json", &estimate_records(cfg, &fits))?;
    let summary = fit_summary(cfg, &fits, &metrics);
    run.finish("fit", summary, Vec::new())
}

/// `cv`: the cross-validation table for every trial.
pub fn cmd_cv(cfg: &RunConfig, threads: usize) -> Result<Outcome, ExperimentError> {
    let model = cfg.drift_model();
    let results = par_trials(threads, effective_trials(cfg), |k| {
        let (_, path) = load_or_simulate(cfg, &model, k as u64)?;
        let choice = select_lambda(cfg, &model, &path, k as u64, true)?;
        Ok(choice.cv.expect("cv forced"))
    })?;
    let mut run = Run::start(cfg)?;
    let mut t = CsvTable::new(["trial", "lambda", "validation_loss", "converged", "iterations", "nnz", "selected", "error"]);
    for (k, cv) in results.iter().enumerate() {
        for r in &cv.table {
            t.push(vec![
                k.to_string(),
                fmt_f64(r.lambda),
                fmt_f64(r.validation_loss),
                r.converged.to_string(),
                r.iterations.to_string(),
                r.nnz.to_string(),
                (r.lambda == cv.lambda0).to_string(),
                r.error.clone().unwrap_or_default().replace(',', ";"),
            ]);
        }
    }
    run.table("cv.csv", &t)?;
    let summary = json!({ "lambda0": results.iter().map(|c| c.lambda0).collect::<Vec<_>>() });
    run.finish("cv", summary, Vec::new())
}

/// `figure1`: sparse SineQuadratic truth, CV-selected Lasso against MLE.
pub fn cmd_figure1(cfg: &RunConfig, threads: usize) -> Result<Outcome, ExperimentError> {
    if cfg.model.family != Family::SineQuadratic {
        return Err(ConfigError::Invalid("figure1 requires model.family = \"sine_quadratic\"".into()).into());
    }
    if cfg.sim.path_file.is_some() {
        return Err(ConfigError::Invalid("figure1 simulates its own paths; remove sim.path_file".into()).into());
    }
    let model = cfg.drift_model();
    let fits = par_trials(threads, cfg.experiment.trials, |k| fit_trial(cfg, &model, k as u64, true))?;
    let mut run = Run::start(cfg)?;
    let metrics = write_fit_outputs(&mut run, cfg, &fits)?;
    let summary = fit_summary(cfg, &fits, &metrics);
    run.finish("figure1", summary, Vec::new())
}

struct ScalingTrial {
    lambda: f64,
    l1: f64,
    l2: f64,
    converged: bool,
}

fn scaling_trial(cfg: &RunConfig, horizon: f64, trial: u64) -> Result<ScalingTrial, ExperimentError> {
    let model = cfg.drift_model();
    let theta0 = true_theta(cfg, trial)?;
    let path = simulate_for(cfg, &model, &theta0, horizon, trial)?;
    let choice = select_lambda(cfg, &model, &path, trial, false)?;
    let res = final_lasso(cfg, &model, &path, &choice, trial)?;
    let m = support_metrics(&res.theta_hat, &theta0, cfg.experiment.zero_tol)?;
    Ok(ScalingTrial {
        lambda: choice.lambda,
        l1: m.l1_err,
        l2: m.l2_err,
        converged: res.converged,
    })
}

/// `scaling-study`: horizon sweep at fixed `(p, s0)` and an optional sweep
/// over `p` at the largest horizon.
pub fn cmd_scaling_study(cfg: &RunConfig, threads: usize) -> Result<Outcome, ExperimentError> {
    if !matches!(cfg.model.family, Family::OrnsteinUhlenbeck | Family::LinearDiagonal) {
        return Err(ConfigError::Invalid("scaling-study requires a linear family".into()).into());
    }
    if cfg.experiment.horizons.len() < 2 {
        return Err(ConfigError::Invalid("scaling-study needs at least two horizons".into()).into());
    }
    if !cfg.experiment.p_sweep.is_empty() && cfg.model.theta.is_some() {
        return Err(ConfigError::Invalid("p_sweep needs generated parameters; remove model.theta".into()).into());
    }
    let trials = cfg.experiment.trials;
    let horizons = cfg.experiment.horizons.clone();
    let jobs: Vec<(usize, u64)> = (0..horizons.len())
        .flat_map(|h| (0..trials as u64).map(move |k| (h, k)))
        .collect();
    let results = par_trials(threads, jobs.len(), |j| {
        let (h, k) = jobs[j];
        scaling_trial(cfg, horizons[h], k)
    })?;

    let mut run = Run::start(cfg)?;
    let mut per_trial = CsvTable::new(["horizon", "trial", "lambda", "l1_err", "l2_err", "converged"]);
    let mut points = Vec::new();
    for (h, &t) in horizons.iter().enumerate() {
        let rows = &results[h * trials..(h + 1) * trials];
        for (k, r) in rows.iter().enumerate() {
            per_trial.push(vec![
                fmt_f64(t),
                k.to_string(),
                fmt_f64(r.lambda),
                fmt_f64(r.l1),
                fmt_f64(r.l2),
                r.converged.to_string(),
            ]);
        }
        let l2: Vec<f64> = rows.iter().map(|r| r.l2).collect();
        let (m, se) = mean_and_se(&l2);
        let lam = rows.iter().map(|r| r.lambda).sum::<f64>() / rows.len() as f64;
        points.push((t, m, se, lam, rows.len()));
    }
    run.table("scaling_trials.csv", &per_trial)?;

    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (intercept, slope, slope_se) = linear_fit(&lx, &ly).unwrap_or((f64::NAN, f64::NAN, f64::NAN));

    // bound-versus-achieved comparison
    let s0 = true_theta(cfg, 0)?.iter().filter(|v| v.abs() > cfg.experiment.zero_tol).count();
    let model = cfg.drift_model();
    let k = match cfg.bounds.k {
        Some(k) => k,
        None => {
            let theta0 = true_theta(cfg, 0)?;
            let path = simulate_for(cfg, &model, &theta0, horizons[0], 0)?;
            let ev = LikelihoodEvaluator::new(&model, &path)?;
            let spec = ConeSpec::for_gamma(s0.max(1), cfg.bounds.gamma)?;
            re_constant_estimate(&ev, spec, cfg.experiment.re_directions.max(1), cfg.sim.seed, 1.0)?
        }
    };
    let mut summary_t = CsvTable::new([
        "horizon", "mean_l2_err", "se_l2_err", "mean_lambda", "trials", "l2_bound", "lambda1", "t1",
    ]);
    for &(t, m, se, lam, n) in &points {
        let inputs = cfg.bound_inputs(s0.max(1), t, lam, k);
        let bound = if k > 0.0 {
            error_bound_calculators(&inputs)?.l2_sq.sqrt()
        } else {
            f64::INFINITY
        };
        let (l1, t1) = lambda1_t1_calculators(&inputs)?;
        summary_t.push(vec![
            fmt_f64(t),
            fmt_f64(m),
            fmt_f64(se),
            fmt_f64(lam),
            n.to_string(),
            fmt_f64(bound),
            fmt_f64(l1),
            fmt_f64(t1),
        ]);
    }
    run.table("scaling_summary.csv", &summary_t)?;
    run.table("bound_inputs.csv", &bound_input_table(cfg, s0.max(1), k))?;
    let mut rate = CsvTable::new(["slope", "slope_se", "intercept"]);
    rate.push(vec![fmt_f64(slope), fmt_f64(slope_se), fmt_f64(intercept)]);
    run.table("rate.csv", &rate)?;

    let mut p_points = Vec::new();
    if !cfg.experiment.p_sweep.is_empty() {
        let t_max = horizons.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sweep = CsvTable::new(["p", "d", "mean_l2_err", "se_l2_err", "trials"]);
        for &p in &cfg.experiment.p_sweep {
            let mut sub = cfg.clone();
            sub.model.d = match cfg.model.family {
                Family::OrnsteinUhlenbeck => (p as f64).sqrt().round() as usize,
                _ => p,
            };
            sub.validate()?;
            let rows = par_trials(threads, trials, |k| scaling_trial(&sub, t_max, k as u64))?;
            let l2: Vec<f64> = rows.iter().map(|r| r.l2).collect();
            let (m, se) = mean_and_se(&l2);
            sweep.push(vec![
                sub.param_dim().to_string(),
                sub.model.d.to_string(),
                fmt_f64(m),
                fmt_f64(se),
                trials.to_string(),
            ]);
            p_points.push((sub.param_dim(), m));
        }
        run.table("p_sweep.csv", &sweep)?;
    }

    let summary = json!({
        "slope": slope,
        "slope_se": slope_se,
        "intercept": intercept,
        "re_constant": k,
        "s0": s0,
        "p_sweep": p_points,
    });
    run.finish("scaling-study", summary, Vec::new())
}

/// The constants behind `l2_bound`, `lambda1` and `t1`, with their origin.
fn bound_input_table(cfg: &RunConfig, s0: usize, k: f64) -> CsvTable {
    let b = &cfg.bounds;
    let inputs = cfg.bound_inputs(s0, f64::NAN, f64::NAN, k);
    let from = |given: bool| if given { "config" } else { "default" };
    let mut t = CsvTable::new(["name", "value", "source"]);
    let rows: [(&str, f64, &str); 15] = [
        ("s0", s0 as f64, "true parameter"),
        ("p", inputs.p as f64, "model"),
        ("gamma", b.gamma, "config"),
        ("k", k, if b.k.is_some() { "config" } else { "re_estimate" }),
        ("l_min", b.l_min, "config"),
        ("epsilon", b.epsilon, "config"),
        ("epsilon0", inputs.epsilon0_resolved(), from(b.epsilon0.is_some())),
        ("c", b.c, "config"),
        ("big_l", b.big_l, "config"),
        ("delta1", b.delta1, "config"),
        ("delta2", b.delta2, "config"),
        ("gamma_43", b.gamma_43, "config"),
        ("gamma_2", b.gamma_2, "config"),
        ("c0", inputs.c0_resolved(), from(b.c0.is_some())),
        ("m_inf", b.m_inf, "config"),
    ];
    for (n, v, src) in rows {
        t.push(vec![n.to_string(), fmt_f64(v), src.to_string()]);
    }
    t
}

struct VerifyTrial {
    lambda: f64,
    certified: bool,
    basic: (f64, f64, bool),
    oracle: (f64, f64, bool),
    k: f64,
}

fn verify_trial(cfg: &RunConfig, model: &DriftModel, trial: u64) -> Result<VerifyTrial, ExperimentError> {
    let theta0 = true_theta(cfg, trial)?;
    let path = simulate_for(cfg, model, &theta0, cfg.sim.horizon, trial)?;
    let choice = select_lambda(cfg, model, &path, trial, false)?;
    let ev = LikelihoodEvaluator::new(model, &path)?;
    let p = model.param_dim();
    let res = fit_lasso(&ev, choice.lambda, &cfg.solver_config(solver_seed(cfg, trial)), &vec![0.0; p])?;
    let basic = basic_inequality_check(&ev, &res.theta_hat, &theta0, &theta0, choice.lambda)?;
    let s = theta0.iter().filter(|v| v.abs() > cfg.experiment.zero_tol).count();
    let k = match cfg.bounds.k {
        Some(k) => k,
        None => re_constant_estimate(
            &ev,
            ConeSpec::for_gamma(s.max(1), cfg.bounds.gamma)?,
            cfg.experiment.re_directions.max(1),
            cfg.sim.seed.wrapping_add(trial),
            1.0,
        )?,
    };
    let inputs = cfg.bound_inputs(s.max(1), path.horizon(), choice.lambda, k.max(f64::MIN_POSITIVE));
    let oracle = oracle_inequality_check(&ev, &res.theta_hat, &theta0, &theta0, &inputs)?;
    Ok(VerifyTrial {
        lambda: choice.lambda,
        certified: res.converged,
        basic: (basic.lhs, basic.rhs, basic.holds),
        oracle: (oracle.lhs, oracle.rhs, oracle.holds),
        k,
    })
}

/// `verify`: basic and oracle inequality frequencies plus the concentration table.
pub fn cmd_verify(cfg: &RunConfig, threads: usize) -> Result<Outcome, ExperimentError> {
    let model = cfg.drift_model();
    let trials = cfg.experiment.trials;
    let rows = par_trials(threads, trials, |k| verify_trial(cfg, &model, k as u64))?;
    let mut run = Run::start(cfg)?;

    let mut basic = CsvTable::new(["trial", "lambda", "lhs", "rhs", "holds", "certified"]);
    let mut oracle = CsvTable::new(["trial", "lambda", "k", "lhs", "rhs", "holds", "reference"]);
    let reference = 1.0 - 2.0 * cfg.bounds.epsilon;
    for (i, r) in rows.iter().enumerate() {
        basic.push(vec![
            i.to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.basic.0),
            fmt_f64(r.basic.1),
            r.basic.2.to_string(),
            r.certified.to_string(),
        ]);
        oracle.push(vec![
            i.to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.k),
            fmt_f64(r.oracle.0),
            fmt_f64(r.oracle.1),
            r.oracle.2.to_string(),
            fmt_f64(reference),
        ]);
    }
    let certified: Vec<&VerifyTrial> = rows.iter().filter(|r| r.certified).collect();
    let basic_freq = if certified.is_empty() {
        f64::NAN
    } else {
        certified.iter().filter(|r| r.basic.2).count() as f64 / certified.len() as f64
    };
    let oracle_freq = rows.iter().filter(|r| r.oracle.2).count() as f64 / rows.len() as f64;
    basic.push(vec![
        "summary".into(),
        String::new(),
        String::new(),
        String::new(),
        fmt_f64(basic_freq),
        certified.len().to_string(),
    ]);
    oracle.push(vec![
        "summary".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        fmt_f64(oracle_freq),
        fmt_f64(reference),
    ]);
    run.table("basic_inequality.csv", &basic)?;
    run.table("oracle_inequality.csv", &oracle)?;

    // concentration of the time average of the first coordinate (Lipschitz constant 1)
    let theta0 = true_theta(cfg, 0)?;
    let e = &cfg.experiment;
    let spec = ConcentrationSpec {
        model: &model,
        theta: &theta0,
        sim: cfg.sim_config(e.concentration_horizon),
        n_trials: e.concentration_trials,
        first_trial: CONCENTRATION_STREAM,
        mu_grid: e.mu_grid.clone(),
        lipschitz: 1.0,
        // every built-in drift is odd in x, so the invariant law is symmetric
        centering: if e.concentration_pooled { Centering::Pooled } else { Centering::Known(0.0) },
        user_c: Some(cfg.bounds.c),
    };
    let table = pool(threads)?.install(|| concentration_mc(&spec, |x| x[0]))?;
    let gaussian_var = (cfg.model.family == Family::OrnsteinUhlenbeck && cfg.model.d == 1)
        .then(|| ou_time_average_variance(theta0[0], e.concentration_horizon));
    let mut conc = CsvTable::new(["mu", "mgf", "mgf_se", "bound_user_c", "holds_user_c", "bound_calibrated_c", "gaussian_reference"]);
    for r in &table.rows {
        let cal = (table.calibrated_c * r.mu * r.mu / table.horizon).exp();
        conc.push(vec![
            fmt_f64(r.mu),
            fmt_f64(r.mgf),
            fmt_f64(r.mgf_se),
            r.bound.map_or(String::new(), fmt_f64),
            r.holds.map_or(String::new(), |h| h.to_string()),
            fmt_f64(cal),
            gaussian_var.map_or(String::new(), |v| fmt_f64((r.mu * r.mu * v / 2.0).exp())),
        ]);
    }
    run.table("concentration.csv", &conc)?;
    let mut tail = CsvTable::new(["threshold", "frequency", "fitted_shape"]);
    for r in &table.tail {
        let fitted = table.tail_fit.map_or(f64::NAN, |(a1, a2)| {
            (-table.horizon * r.threshold * r.threshold / (a1 + a2 * r.threshold)).exp()
        });
        tail.push(vec![fmt_f64(r.threshold), fmt_f64(r.frequency), fmt_f64(fitted)]);
    }
    run.table("concentration_tail.csv", &tail)?;

    let mut failed = Vec::new();
    if !(basic_freq >= e.basic_min_frequency) {
        failed.push(format!("basic inequality frequency {basic_freq} below {}", e.basic_min_frequency));
    }
    if !(oracle_freq >= e.oracle_min_frequency) {
        failed.push(format!("oracle inequality frequency {oracle_freq} below {}", e.oracle_min_frequency));
    }
    let summary = json!({
        "basic_frequency": basic_freq,
        "certified_trials": certified.len(),
        "oracle_frequency": oracle_freq,
        "oracle_reference": reference,
        "calibrated_c": table.calibrated_c,
        "tail_fit": table.tail_fit,
    });
    run.finish("verify", summary, failed)
}
