//! Maximum likelihood, Lasso and adaptive Lasso via proximal gradient, and
//! hold-out cross-validation of the penalty level.
//!
//! When the objective exposes curvature, damped proximal Newton steps run
//! first and the proximal-gradient loop finishes from their end point, so
//! the stopping rule and certificate are the same either way.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::likelihood::{LikelihoodError, LikelihoodEvaluator, Objective};
use crate::model::{DriftModel, ParamVector};
use crate::numeric::{dot, log_spaced_desc, norm_inf};
use crate::sim::{subpath, trial_rng, ObservedPath, SimError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("lambda must be nonnegative and finite, got {0}")]
    InvalidLambda(f64),
    #[error("initial point has length {got}, expected {expected}")]
    InitDimension { got: usize, expected: usize },
    #[error("adaptive lasso pilot estimate is identically zero")]
    DegeneratePilot,
    #[error("line search failed: step size underflow at iteration {0}")]
    StepUnderflow(usize),
    #[error("cross-validation failed for every lambda: {0}")]
    CvFailed(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Relative objective-change and stationarity threshold.
    pub tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    /// FISTA momentum with restart whenever the objective would increase.
    pub acceleration: bool,
    pub multi_start: usize,
    /// Standard deviation of the Gaussian perturbations used for extra starts.
    pub multi_start_scale: f64,
    /// Cap on proximal Gauss–Newton steps taken before the proximal-gradient
    /// loop, for objectives that expose curvature. 0 disables them.
    pub newton_steps: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-8,
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            acceleration: true,
            multi_start: 1,
            multi_start_scale: 1.0,
            newton_steps: 50,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return bad("sufficient_decrease must lie in (0, 1)");
        }
        if self.multi_start == 0 {
            return bad("multi_start must be at least 1");
        }
        if !(self.multi_start_scale > 0.0) {
            return bad("multi_start_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub theta_hat: ParamVector,
    /// Composite objective after each accepted iterate, starting at the initial point.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖θ − prox(θ − s∇f(θ))‖_∞ / s` at the returned point.
    pub stationarity_residual: f64,
    /// `1 + |objective at the initial point|`.
    pub scale: f64,
    pub step: f64,
}

impl SolverResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// `sign(v) · max(|v| − t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Weighted ℓ1 penalty `λ Σ w_j |θ_j|`; an infinite weight pins `θ_j = 0`.
#[derive(Debug, Clone)]
struct Penalty {
    lambda: f64,
    weights: Option<Vec<f64>>,
}

impl Penalty {
    fn weight(&self, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[j])
    }

    fn value(&self, theta: &[f64]) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        let s: f64 = theta
            .iter()
            .enumerate()
            .map(|(j, t)| if *t == 0.0 { 0.0 } else { self.weight(j) * t.abs() })
            .sum();
        self.lambda * s
    }

    fn prox_into(&self, v: &[f64], step: f64, out: &mut [f64]) {
        for (j, (o, x)) in out.iter_mut().zip(v).enumerate() {
            let w = self.weight(j);
            *o = if w.is_infinite() {
                0.0
            } else {
                soft_threshold(*x, step * self.lambda * w)
            };
        }
    }

    fn project(&self, theta: &mut [f64]) {
        if let Some(w) = &self.weights {
            for (t, wj) in theta.iter_mut().zip(w) {
                if wj.is_infinite() {
                    *t = 0.0;
                }
            }
        }
    }
}

fn stationarity_residual(theta: &[f64], grad: &[f64], step: f64, pen: &Penalty, buf: &mut Vec<f64>) -> f64 {
    let v: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - step * g).collect();
    buf.resize(theta.len(), 0.0);
    pen.prox_into(&v, step, buf);
    theta
        .iter()
        .zip(buf.iter())
        .fold(0.0f64, |m, (t, z)| m.max((t - z).abs()))
        / step
}

/// `argmin_u gᵀ(u − θ) + ½(u − θ)ᵀH(u − θ) + pen(u)` by cyclic coordinate
/// descent; `h` must have a positive diagonal.
fn prox_newton_direction(h: &DMatrix<f64>, g: &[f64], theta: &[f64], pen: &Penalty) -> Vec<f64> {
    let p = theta.len();
    let mut u = theta.to_vec();
    // hd = H (u − θ)
    let mut hd = vec![0.0; p];
    for _ in 0..1000 {
        let mut moved = 0.0f64;
        let mut size = 0.0f64;
        for j in 0..p {
            let a = h[(j, j)];
            let w = pen.weight(j);
            let c = g[j] + hd[j] - a * (u[j] - theta[j]);
            let next = if w.is_infinite() {
                0.0
            } else {
                soft_threshold(theta[j] - c / a, pen.lambda * w / a)
            };
            let delta = next - u[j];
            if delta != 0.0 {
                for (k, hk) in hd.iter_mut().enumerate() {
                    *hk += h[(k, j)] * delta;
                }
                u[j] = next;
                moved = moved.max(delta.abs());
            }
            size = size.max(next.abs());
        }
        if moved <= 1e-13 * (1.0 + size) {
            break;
        }
    }
    u
}

/// Damped proximal Gauss–Newton steps with an Armijo line search.
/// Returns `None` when the objective exposes no curvature.
fn newton_stage<O: Objective + ?Sized>(
    obj: &O,
    pen: &Penalty,
    cfg: &SolverConfig,
    theta: &mut Vec<f64>,
    trace: &mut Vec<f64>,
) -> Result<Option<usize>, SolverError> {
    let p = obj.dim();
    let mut grad = vec![0.0; p];
    let mut curv = DMatrix::zeros(p, p);
    let Some(f0) = obj.value_gradient_curvature(theta, &mut grad, &mut curv)? else {
        return Ok(None);
    };
    let mut big_f = f0 + pen.value(theta);
    trace.push(big_f);
    let thresh = cfg.tol * (1.0 + big_f.abs());
    let mut scratch = Vec::new();
    let mut steps = 0;
    while steps < cfg.newton_steps {
        let top = (0..p).map(|j| curv[(j, j)]).fold(0.0f64, f64::max).max(1e-8);
        if stationarity_residual(theta, &grad, 1.0 / top, pen, &mut scratch) <= thresh {
            break;
        }
        for j in 0..p {
            curv[(j, j)] += 1e-8 * top;
        }
        let u = prox_newton_direction(&curv, &grad, theta, pen);
        let dir: Vec<f64> = u.iter().zip(theta.iter()).map(|(a, b)| a - b).collect();
        let predicted = dot(&grad, &dir) + pen.value(&u) - pen.value(theta);
        if !(predicted < 0.0) {
            break;
        }
        let slack = 1e-14 * big_f.abs().max(1.0);
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            if let Ok(ft) = obj.value(&trial) {
                let big_ft = ft + pen.value(&trial);
                if big_ft <= big_f + cfg.sufficient_decrease * t * predicted + slack {
                    break Some((trial, big_ft));
                }
            }
            t *= 0.5;
            if t < 1e-10 {
                break None;
            }
        };
        let Some((next, big_next)) = accepted else {
            break;
        };
        steps += 1;
        *theta = next;
        trace.push(big_next);
        let Some(f) = obj.value_gradient_curvature(theta, &mut grad, &mut curv)? else {
            break;
        };
        big_f = f + pen.value(theta);
    }
    Ok(Some(steps))
}

fn solve<O: Objective + ?Sized>(
    obj: &O,
    pen: &Penalty,
    cfg: &SolverConfig,
    init: &[f64],
) -> Result<SolverResult, SolverError> {
    let mut theta = init.to_vec();
    pen.project(&mut theta);
    let mut trace = Vec::new();
    let newton = if cfg.newton_steps > 0 {
        newton_stage(obj, pen, cfg, &mut theta, &mut trace)?
    } else {
        None
    };
    let Some(steps) = newton else {
        return prox_gradient(obj, pen, cfg, &theta, None);
    };
    let scale = 1.0 + trace[0].abs();
    let mut res = prox_gradient(obj, pen, cfg, &theta, Some(scale))?;
    // the polish starts where the Newton trace ends
    trace.extend_from_slice(&res.objective_trace[1..]);
    res.objective_trace = trace;
    res.iterations += steps;
    Ok(res)
}

fn prox_gradient<O: Objective + ?Sized>(
    obj: &O,
    pen: &Penalty,
    cfg: &SolverConfig,
    init: &[f64],
    scale: Option<f64>,
) -> Result<SolverResult, SolverError> {
    let p = obj.dim();
    let mut theta = init.to_vec();
    pen.project(&mut theta);
    let mut grad = vec![0.0; p];
    let mut f = obj.value_and_gradient(&theta, &mut grad)?;
    // the gradient at `theta` is only refreshed when something needs it
    let mut grad_fresh = true;
    let mut big_f = f + pen.value(&theta);
    let scale = scale.unwrap_or(1.0 + big_f.abs());
    let thresh = cfg.tol * scale;
    let sigma = cfg.sufficient_decrease;

    let mut trace = vec![big_f];
    let mut step = cfg.initial_step;
    let mut theta_prev = theta.clone();
    let mut momentum = 1.0f64;
    let mut y = theta.clone();
    let mut fy = f;
    let mut gy = grad.clone();
    let mut z = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut diff = vec![0.0; p];
    let mut scratch = Vec::new();
    let mut clean_steps = 0usize;
    let mut converged = false;
    let mut iterations = 0;

    let refresh = |theta: &[f64], grad: &mut [f64], fresh: &mut bool| -> Result<(), SolverError> {
        if !*fresh {
            obj.value_and_gradient(theta, grad)?;
            *fresh = true;
        }
        Ok(())
    };

    while iterations < cfg.max_iter {
        iterations += 1;
        // backtracking line search on the quadratic upper model at y
        let (fz, dist_inf) = loop {
            for j in 0..p {
                v[j] = y[j] - step * gy[j];
            }
            pen.prox_into(&v, step, &mut z);
            for j in 0..p {
                diff[j] = z[j] - y[j];
            }
            match obj.value(&z) {
                Ok(fz) => {
                    let model = fy + dot(&gy, &diff) + (1.0 - sigma) / (2.0 * step) * dot(&diff, &diff);
                    if fz <= model + 1e-14 * fy.abs().max(1.0) {
                        break (fz, norm_inf(&diff));
                    }
                }
                Err(LikelihoodError::NonFinite(_)) => {}
                Err(e) => return Err(e.into()),
            }
            step *= cfg.shrink;
            clean_steps = 0;
            if step < 1e-30 {
                return Err(SolverError::StepUnderflow(iterations));
            }
        };
        let big_fz = fz + pen.value(&z);

        if cfg.acceleration && big_fz > big_f && y != theta {
            // momentum overshoot: restart from the last accepted iterate
            refresh(&theta, &mut grad, &mut grad_fresh)?;
            momentum = 1.0;
            y.copy_from_slice(&theta);
            fy = f;
            gy.copy_from_slice(&grad);
            continue;
        }

        theta_prev.copy_from_slice(&theta);
        theta.copy_from_slice(&z);
        grad_fresh = false;
        f = fz;
        let rel_change = (big_f - big_fz).abs();
        big_f = big_fz;
        trace.push(big_f);

        if rel_change <= thresh && dist_inf / step <= thresh {
            refresh(&theta, &mut grad, &mut grad_fresh)?;
            let r = stationarity_residual(&theta, &grad, step, pen, &mut scratch);
            if r <= thresh {
                converged = true;
                break;
            }
            momentum = 1.0;
        }

        let beta = if cfg.acceleration {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            momentum = next;
            beta
        } else {
            0.0
        };
        let mut extrapolated = false;
        if beta > 0.0 {
            for j in 0..p {
                y[j] = theta[j] + beta * (theta[j] - theta_prev[j]);
            }
            pen.project(&mut y);
            match obj.value_and_gradient(&y, &mut gy) {
                Ok(val) => {
                    fy = val;
                    extrapolated = true;
                }
                Err(LikelihoodError::NonFinite(_)) => momentum = 1.0,
                Err(e) => return Err(e.into()),
            }
        }
        if !extrapolated {
            refresh(&theta, &mut grad, &mut grad_fresh)?;
            y.copy_from_slice(&theta);
            fy = f;
            gy.copy_from_slice(&grad);
        }

        clean_steps += 1;
        if clean_steps >= 10 {
            step /= cfg.shrink;
            clean_steps = 0;
        }
    }

    refresh(&theta, &mut grad, &mut grad_fresh)?;
    let residual = stationarity_residual(&theta, &grad, step, pen, &mut scratch);
    Ok(SolverResult {
        theta_hat: ParamVector::from(theta),
        objective_trace: trace,
        iterations,
        converged: converged || residual <= thresh && iterations < cfg.max_iter,
        stationarity_residual: residual,
        scale,
        step,
    })
}

fn multi_start<O: Objective + ?Sized>(
    obj: &O,
    pen: &Penalty,
    cfg: &SolverConfig,
    init: &[f64],
) -> Result<SolverResult, SolverError> {
    cfg.validate()?;
    if init.len() != obj.dim() {
        return Err(SolverError::InitDimension {
            got: init.len(),
            expected: obj.dim(),
        });
    }
    let mut best = solve(obj, pen, cfg, init)?;
    if cfg.multi_start > 1 {
        let mut rng = trial_rng(cfg.seed, u64::MAX);
        for _ in 1..cfg.multi_start {
            let start: Vec<f64> = init
                .iter()
                .map(|t| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    t + cfg.multi_start_scale * z
                })
                .collect();
            match solve(obj, pen, cfg, &start) {
                Ok(r) if r.objective() < best.objective() => best = r,
                Ok(_) | Err(SolverError::StepUnderflow(_)) => {}
                Err(SolverError::Likelihood(LikelihoodError::NonFinite(_))) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(best)
}

/// Minimiser of the negative log-likelihood (a stationary point for
/// non-convex families).
pub fn fit_mle<O: Objective + ?Sized>(
    obj: &O,
    cfg: &SolverConfig,
    theta_init: &[f64],
) -> Result<SolverResult, SolverError> {
    let pen = Penalty {
        lambda: 0.0,
        weights: None,
    };
    multi_start(obj, &pen, cfg, theta_init)
}

/// Minimiser of `L_T(θ) + λ‖θ‖₁`.
pub fn fit_lasso<O: Objective + ?Sized>(
    obj: &O,
    lambda: f64,
    cfg: &SolverConfig,
    theta_init: &[f64],
) -> Result<SolverResult, SolverError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SolverError::InvalidLambda(lambda));
    }
    let pen = Penalty { lambda, weights: None };
    multi_start(obj, &pen, cfg, theta_init)
}

/// Penalty weights `1 / |pilot_j|^α`, infinite where the pilot is zero.
pub fn adaptive_weights(pilot: &[f64], alpha: f64) -> Result<Vec<f64>, SolverError> {
    if !(alpha > 0.0) {
        return Err(SolverError::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }
    if pilot.iter().all(|v| *v == 0.0) {
        return Err(SolverError::DegeneratePilot);
    }
    Ok(pilot
        .iter()
        .map(|v| if *v == 0.0 { f64::INFINITY } else { v.abs().powf(-alpha) })
        .collect())
}

/// Adaptive Lasso: `L_T(θ) + λ Σ_j |θ_j| / |pilot_j|^α`, started at the pilot.
/// Coordinates where the pilot vanishes stay at zero.
pub fn fit_adaptive_lasso<O: Objective + ?Sized>(
    obj: &O,
    lambda: f64,
    alpha: f64,
    theta_pilot: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SolverError::InvalidLambda(lambda));
    }
    if theta_pilot.len() != obj.dim() {
        return Err(SolverError::InitDimension {
            got: theta_pilot.len(),
            expected: obj.dim(),
        });
    }
    let weights = adaptive_weights(theta_pilot, alpha)?;
    let pen = Penalty {
        lambda,
        weights: Some(weights),
    };
    multi_start(obj, &pen, cfg, theta_pilot)
}

/// `λ_max = ‖∇L_T(0)‖_∞`: the smallest penalty for which θ = 0 is stationary.
pub fn lambda_max<O: Objective + ?Sized>(obj: &O) -> Result<f64, SolverError> {
    let mut g = vec![0.0; obj.dim()];
    obj.value_and_gradient(&vec![0.0; obj.dim()], &mut g)?;
    Ok(norm_inf(&g))
}

/// Log-spaced descending grid from `λ_max` to `λ_max · ratio`.
pub fn default_lambda_grid<O: Objective + ?Sized>(obj: &O, count: usize, ratio: f64) -> Result<Vec<f64>, SolverError> {
    let hi = lambda_max(obj)?;
    if hi == 0.0 {
        return Ok(vec![0.0]);
    }
    Ok(log_spaced_desc(hi, hi * ratio, count))
}

/// Which part of the path scores the fitted models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValidationWindow {
    /// `[0.9T, T]`.
    LastTenPercent,
    /// `[0.8T, T]`.
    LastTwentyPercent,
}

impl ValidationWindow {
    pub fn start_fraction(self) -> f64 {
        match self {
            Self::LastTenPercent => 0.9,
            Self::LastTwentyPercent => 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub solver: SolverConfig,
    pub train_fraction: f64,
    pub validation_window: ValidationWindow,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            train_fraction: 0.8,
            validation_window: ValidationWindow::LastTenPercent,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub lambda: f64,
    /// Un-penalised negative log-likelihood on the validation window; NaN if the fit failed.
    pub validation_loss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub nnz: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda0: f64,
    pub table: Vec<CvRow>,
    /// Training-window estimate at `lambda0`.
    pub theta_at_lambda0: ParamVector,
}

/// Hold-out selection of λ: fit on `[start, start + 0.8T]` along the
/// descending grid with warm starts, score each fit by the un-penalised
/// likelihood on the validation window, return the minimiser (ties go to
/// the larger λ).
pub fn cross_validate_lambda(
    path: &ObservedPath,
    model: &DriftModel,
    lambda_grid: &[f64],
    opts: &CvOptions,
) -> Result<CvResult, SolverError> {
    let mut grid: Vec<f64> = lambda_grid.to_vec();
    if grid.is_empty() {
        return Err(SolverError::InvalidConfig("lambda grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(SolverError::InvalidLambda(*bad));
    }
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();

    let (t0, t_total) = (path.start_time(), path.horizon());
    let train = subpath(path, t0, t0 + opts.train_fraction * t_total)?;
    let valid = subpath(path, t0 + opts.validation_window.start_fraction() * t_total, path.end_time())?;
    let train_ev = LikelihoodEvaluator::new(model, &train)?;
    let valid_ev = LikelihoodEvaluator::new(model, &valid)?;

    let p = model.param_dim();
    let mut warm = vec![0.0; p];
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64, ParamVector)> = None;
    for &lambda in &grid {
        let row = match fit_lasso(&train_ev, lambda, &opts.solver, &warm) {
            Ok(res) => match valid_ev.neg_log_likelihood(&res.theta_hat) {
                Ok(loss) => {
                    warm.copy_from_slice(&res.theta_hat);
                    if best.as_ref().is_none_or(|(_, l, _)| loss < *l) {
                        best = Some((lambda, loss, res.theta_hat.clone()));
                    }
                    CvRow {
                        lambda,
                        validation_loss: loss,
                        converged: res.converged,
                        iterations: res.iterations,
                        nnz: res.theta_hat.l0(0.0),
                        error: None,
                    }
                }
                Err(e) => failed_row(lambda, e.to_string()),
            },
            Err(e) => failed_row(lambda, e.to_string()),
        };
        table.push(row);
    }
    match best {
        Some((lambda0, _, theta)) => Ok(CvResult {
            lambda0,
            table,
            theta_at_lambda0: theta,
        }),
        None => Err(SolverError::CvFailed(
            table
                .iter()
                .map(|r| format!("λ={}: {}", r.lambda, r.error.as_deref().unwrap_or("?")))
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}

fn failed_row(lambda: f64, error: String) -> CvRow {
    CvRow {
        lambda,
        validation_loss: f64::NAN,
        converged: false,
        iterations: 0,
        nnz: 0,
        error: Some(error),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::QuadraticForm;
    use nalgebra::{DMatrix, DVector};

    fn quad(h: &[f64], q: &[f64]) -> QuadraticForm {
        let p = q.len();
        QuadraticForm {
            hessian: DMatrix::from_row_slice(p, p, h),
            linear: DVector::from_column_slice(q),
            constant: 0.0,
        }
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 1.0), -1.5);
        for v in [-3.2, 0.0, 7.5] {
            assert_eq!(soft_threshold(v, 0.0), v);
        }
    }

    #[test]
    fn mle_of_quadratic_solves_normal_equations() {
        let q = quad(&[2.0, 0.5, 0.5, 1.0], &[-1.0, 0.3]);
        let res = fit_mle(&q, &SolverConfig::default(), &[0.0, 0.0]).unwrap();
        let exact = q.hessian.clone().lu().solve(&(-q.linear.clone())).unwrap();
        assert!(res.converged);
        for j in 0..2 {
            assert!((res.theta_hat[j] - exact[j]).abs() < 1e-8);
        }
        let again = fit_mle(&q, &SolverConfig::default(), exact.as_slice()).unwrap();
        assert!(again.iterations <= 2);
    }

    #[test]
    fn lasso_above_lambda_max_is_zero() {
        let q = quad(&[1.0, 0.2, 0.2, 3.0], &[-0.7, 0.4]);
        let lmax = lambda_max(&q).unwrap();
        assert!((lmax - 0.7).abs() < 1e-15);
        let res = fit_lasso(&q, lmax, &SolverConfig::default(), &[0.0, 0.0]).unwrap();
        assert_eq!(res.theta_hat.as_slice(), &[0.0, 0.0]);
        let res = fit_lasso(&q, 1.5 * lmax, &SolverConfig::default(), &[1.0, -1.0]).unwrap();
        assert_eq!(res.theta_hat.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn one_dimensional_lasso_closed_form() {
        // ½ a θ² + q θ + λ|θ|  →  θ* = −soft(q, λ)/a
        let q = quad(&[2.0], &[-3.0]);
        let res = fit_lasso(&q, 1.0, &SolverConfig::default(), &[0.0]).unwrap();
        assert!((res.theta_hat[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn monotone_trace_without_acceleration() {
        let q = quad(&[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 0.2], &[-1.0, 2.0, -0.3]);
        let cfg = SolverConfig {
            acceleration: false,
            ..Default::default()
        };
        let res = fit_lasso(&q, 0.1, &cfg, &[5.0, 5.0, 5.0]).unwrap();
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(res.converged);
    }

    #[test]
    fn invalid_inputs() {
        let q = quad(&[1.0], &[0.0]);
        assert!(matches!(
            fit_lasso(&q, -1.0, &SolverConfig::default(), &[0.0]),
            Err(SolverError::InvalidLambda(_))
        ));
        let cfg = SolverConfig {
            shrink: 1.5,
            ..Default::default()
        };
        assert!(fit_mle(&q, &cfg, &[0.0]).is_err());
        assert!(matches!(
            fit_mle(&q, &SolverConfig::default(), &[0.0, 1.0]),
            Err(SolverError::InitDimension { .. })
        ));
        assert!(matches!(
            fit_adaptive_lasso(&q, 0.1, 1.0, &[0.0], &SolverConfig::default()),
            Err(SolverError::DegeneratePilot)
        ));
    }

    #[test]
    fn adaptive_with_unit_weights_matches_lasso() {
        let q = quad(&[2.0, 0.3, 0.3, 1.0], &[-1.0, 0.8]);
        let cfg = SolverConfig::default();
        let plain = fit_lasso(&q, 0.2, &cfg, &[1.0, -1.0]).unwrap();
        let adap = fit_adaptive_lasso(&q, 0.2, 1.7, &[1.0, -1.0], &cfg).unwrap();
        assert_eq!(plain.theta_hat, adap.theta_hat);
    }

    #[test]
    fn adaptive_keeps_pilot_zeros() {
        let q = quad(&[2.0, 0.3, 0.3, 1.0], &[-1.0, 0.8]);
        let adap = fit_adaptive_lasso(&q, 0.01, 1.0, &[0.5, 0.0], &SolverConfig::default()).unwrap();
        assert_eq!(adap.theta_hat[1], 0.0);
        assert!(adap.theta_hat[0] > 0.0);
    }

    #[test]
    fn weights_formula() {
        let w = adaptive_weights(&[2.0, -0.5, 0.0], 2.0).unwrap();
        assert_eq!(w[0], 0.25);
        assert_eq!(w[1], 4.0);
        assert!(w[2].is_infinite());
    }
}
