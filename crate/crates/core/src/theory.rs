//! Executable versions of the estimator's inequalities, constants and error
//! bounds, plus Monte Carlo calibration of the concentration constant.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::likelihood::{LikelihoodError, LikelihoodEvaluator};
use crate::model::DriftModel;
use crate::numeric::{compensated_sum, linear_fit, norm1, norm2};
use crate::sim::{simulate_trial, trial_rng, SimConfig, SimError};

pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("cone membership is undefined for the zero vector")]
    ZeroVector,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, TheoryError> {
    Err(TheoryError::InvalidInput(msg.into()))
}

/// The cone `C(s, c) = {x ≠ 0 : ‖x‖₁ ≤ (1 + c)‖x_{I_s(x)}‖₁}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSpec {
    pub s: usize,
    pub c: f64,
}

impl ConeSpec {
    pub fn new(s: usize, c: f64) -> Result<Self, TheoryError> {
        if s == 0 {
            return invalid("cone sparsity s must be positive");
        }
        if !(c >= 0.0 && c.is_finite()) {
            return invalid(format!("cone constant c must be nonnegative, got {c}"));
        }
        Ok(Self { s, c })
    }

    /// `C(s, 3 + 4/γ)`.
    pub fn for_gamma(s: usize, gamma: f64) -> Result<Self, TheoryError> {
        if !(gamma > 0.0) {
            return invalid("gamma must be positive");
        }
        Self::new(s, 3.0 + 4.0 / gamma)
    }
}

/// Indices of the `s` largest entries of `x` in magnitude, ties to the lowest index.
pub fn top_s_indices(x: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    idx.truncate(s.min(x.len()));
    idx
}

pub fn cone_membership(x: &[f64], spec: ConeSpec) -> Result<bool, TheoryError> {
    if x.iter().all(|v| *v == 0.0) {
        return Err(TheoryError::ZeroVector);
    }
    let top: f64 = top_s_indices(x, spec.s).iter().map(|&j| x[j].abs()).sum();
    Ok(norm1(x) <= (1.0 + spec.c) * top)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Magnitude the tolerance is relative to.
    pub scale: f64,
}

/// `‖b_θ̂ − b_θ₀‖²_T ≤ ‖b_θ − b_θ₀‖²_T + 2G(θ, θ̂) + 2λ(‖θ‖₁ − ‖θ̂‖₁)`,
/// accepted up to `1e-9 · scale`.
pub fn basic_inequality_check(
    ev: &LikelihoodEvaluator<'_>,
    theta_hat: &[f64],
    theta: &[f64],
    theta0: &[f64],
    lambda: f64,
) -> Result<InequalityReport, TheoryError> {
    if !(lambda >= 0.0) {
        return invalid("lambda must be nonnegative");
    }
    let lhs = ev.drift_distance_sq(theta_hat, theta0)?;
    let approx = ev.drift_distance_sq(theta, theta0)?;
    let g = ev.stochastic_term_g(theta, theta_hat)?;
    let pen = 2.0 * lambda * (norm1(theta) - norm1(theta_hat));
    let rhs = approx + 2.0 * g + pen;
    let scale = 1.0 + lhs.abs() + approx.abs() + 2.0 * g.abs() + 2.0 * lambda * (norm1(theta) + norm1(theta_hat));
    Ok(InequalityReport {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9 * scale,
        scale,
    })
}

/// Scalar inputs of the deterministic bounds. Entropy and diameter terms are
/// supplied by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub s0: usize,
    pub p: usize,
    pub horizon: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Restricted eigenvalue constant.
    pub k: f64,
    pub l_min: f64,
    pub epsilon: f64,
    /// Defaults to `epsilon` when `None`.
    pub epsilon0: Option<f64>,
    /// Concentration constant.
    pub c: f64,
    pub big_l: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub gamma_43: f64,
    pub gamma_2: f64,
    /// Defaults to `3 + 4/γ` when `None`.
    pub c0: Option<f64>,
    pub m_inf: f64,
}

pub fn default_big_l() -> f64 {
    16.0 + 2f64.powf(23.0 / 4.0)
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            s0: 1,
            p: 1,
            horizon: 20.0,
            lambda: 0.1,
            gamma: 2.0,
            k: 1.0,
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

impl BoundInputs {
    pub fn c0_resolved(&self) -> f64 {
        self.c0.unwrap_or(3.0 + 4.0 / self.gamma)
    }

    pub fn epsilon0_resolved(&self) -> f64 {
        self.epsilon0.unwrap_or(self.epsilon)
    }

    fn require_positive(&self, items: &[(&str, f64)]) -> Result<(), TheoryError> {
        for (name, v) in items {
            if !(*v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }

    fn require_nonneg(&self, items: &[(&str, f64)]) -> Result<(), TheoryError> {
        for (name, v) in items {
            if !(*v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be nonnegative and finite, got {v}"));
            }
        }
        Ok(())
    }
}

/// `4(γ+2)² s λ² / (γ k²)`.
pub fn oracle_remainder(s: usize, lambda: f64, gamma: f64, k: f64) -> f64 {
    4.0 * (gamma + 2.0).powi(2) * s as f64 * lambda * lambda / (gamma * k * k)
}

/// `‖b_θ̂ − b_θ₀‖²_T ≤ (1+γ)‖b_θ − b_θ₀‖²_T + 4(γ+2)² s λ²/(γ k²)` with `s = ‖θ‖₀`.
/// A per-trial event; callers aggregate the holds frequency.
pub fn oracle_inequality_check(
    ev: &LikelihoodEvaluator<'_>,
    theta_hat: &[f64],
    theta: &[f64],
    theta0: &[f64],
    inputs: &BoundInputs,
) -> Result<InequalityReport, TheoryError> {
    inputs.require_positive(&[("gamma", inputs.gamma), ("k", inputs.k)])?;
    inputs.require_nonneg(&[("lambda", inputs.lambda)])?;
    let s = theta.iter().filter(|v| v.abs() > DEFAULT_ZERO_TOL).count();
    let lhs = ev.drift_distance_sq(theta_hat, theta0)?;
    let approx = ev.drift_distance_sq(theta, theta0)?;
    let rhs = (1.0 + inputs.gamma) * approx + oracle_remainder(s, inputs.lambda, inputs.gamma, inputs.k);
    Ok(InequalityReport {
        lhs,
        rhs,
        holds: lhs <= rhs,
        scale: 1.0 + lhs.abs() + rhs.abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBounds {
    /// Bound on `‖θ̂ − θ₀‖²₂`.
    pub l2_sq: f64,
    pub l1: f64,
    pub l0: f64,
}

/// Bounds in terms of the restricted eigenvalue constant `k`.
pub fn error_bound_calculators(inputs: &BoundInputs) -> Result<ErrorBounds, TheoryError> {
    let BoundInputs { gamma, k, lambda, l_min, m_inf, .. } = *inputs;
    inputs.require_positive(&[("gamma", gamma), ("k", k), ("l_min", l_min)])?;
    inputs.require_nonneg(&[("lambda", lambda), ("m_inf", m_inf)])?;
    let s0 = inputs.s0 as f64;
    Ok(ErrorBounds {
        l2_sq: 4.0 * (gamma + 2.0).powi(2) * s0 * lambda * lambda / (gamma * k.powi(4)),
        l1: 8.0 * (gamma + 1.0) * (gamma + 2.0) * s0 * lambda / (gamma.powf(1.5) * k * k),
        l0: l0_bound(inputs),
    })
}

fn l0_bound(inputs: &BoundInputs) -> f64 {
    let g = inputs.gamma;
    64.0 * inputs.m_inf * (g + 1.0) * (g + 2.0) * inputs.s0 as f64 / (g.powf(1.5) * inputs.l_min.powi(2))
}

/// The same bounds with `k = l_min / 2` folded into the constants.
pub fn error_bounds_lmin(inputs: &BoundInputs) -> Result<ErrorBounds, TheoryError> {
    let BoundInputs { gamma, lambda, l_min, m_inf, .. } = *inputs;
    inputs.require_positive(&[("gamma", gamma), ("l_min", l_min)])?;
    inputs.require_nonneg(&[("lambda", lambda), ("m_inf", m_inf)])?;
    let s0 = inputs.s0 as f64;
    Ok(ErrorBounds {
        l2_sq: 64.0 * (gamma + 2.0).powi(2) * s0 * lambda * lambda / (gamma * l_min.powi(4)),
        l1: 32.0 * (gamma + 1.0) * (gamma + 2.0) * s0 * lambda / (gamma.powf(1.5) * l_min * l_min),
        l0: l0_bound(inputs),
    })
}

/// Penalty threshold `λ₁` and minimal horizon `T₁`.
pub fn lambda1_t1_calculators(inputs: &BoundInputs) -> Result<(f64, f64), TheoryError> {
    let b = inputs;
    b.require_positive(&[
        ("T", b.horizon),
        ("epsilon", b.epsilon),
        ("epsilon0", b.epsilon0_resolved()),
        ("C", b.c),
        ("L", b.big_l),
        ("l_min", b.l_min),
        ("gamma", b.gamma),
    ])?;
    b.require_nonneg(&[
        ("delta1", b.delta1),
        ("delta2", b.delta2),
        ("gamma_43", b.gamma_43),
        ("gamma_2", b.gamma_2),
        ("c0", b.c0_resolved()),
    ])?;
    if b.p == 0 || b.s0 == 0 {
        return invalid("p and s0 must be positive");
    }
    let (l, t, p) = (b.big_l, b.horizon, b.p as f64);
    let log_term = (2.0 * l * p).ln() + (2.0 / b.epsilon).ln();
    let first = (log_term / (2.0 * t)).sqrt();
    let second = ((2.0 * b.c).cbrt() / 6.0 * log_term / t).powf(0.75);
    let lambda1 = 4.0 * l * b.delta1 * first.max(second) + 4.0 * l * b.gamma_43 / t.sqrt();

    let two_s0 = 2.0 * b.s0 as f64;
    let inner_min = (two_s0 * p.ln()).min(1.0 + p.ln() - two_s0.ln());
    let log_count = two_s0 * 21f64.ln() + two_s0 * inner_min;
    let radicand = (log_count + (l / b.epsilon0_resolved()).ln()).max(0.0);
    let c0 = b.c0_resolved();
    let t1 = 2592.0 * (c0 + 2.0).powi(4) * l * l * b.c / (b.l_min * b.l_min)
        * (b.delta2 * radicand.sqrt() + b.gamma_2).powi(2);
    Ok((lambda1, t1))
}

/// Sample a direction in `C(s, c)`: a Gaussian block on a random `s`-subset
/// plus a tail whose ℓ₁ mass is a uniform fraction of `c · ‖block‖₁`.
pub fn sample_cone_direction<R: Rng + ?Sized>(p: usize, spec: ConeSpec, rng: &mut R) -> Vec<f64> {
    let s = spec.s.min(p);
    let mut x = vec![0.0; p];
    let chosen = sample(rng, p, s).into_vec();
    let mut in_block = vec![false; p];
    for &j in &chosen {
        let v: f64 = StandardNormal.sample(rng);
        x[j] = if v == 0.0 { 1.0 } else { v };
        in_block[j] = true;
    }
    if s < p && spec.c > 0.0 {
        let block: f64 = chosen.iter().map(|&j| x[j].abs()).sum();
        let tail: Vec<f64> = (0..p - s).map(|_| StandardNormal.sample(rng)).collect();
        let tail_l1 = norm1(&tail);
        let frac: f64 = rng.random_range(0.0..=1.0);
        if tail_l1 > 0.0 {
            let scale = frac * spec.c * block / tail_l1;
            let mut it = tail.into_iter();
            for (j, v) in x.iter_mut().enumerate() {
                if !in_block[j] {
                    *v = scale * it.next().unwrap_or(0.0);
                }
            }
        }
    }
    x
}

/// Data-driven upper estimate of the restricted eigenvalue constant: the
/// running minimum of `‖b_θ − b_ϑ‖_T / ‖θ − ϑ‖₂` over `n_directions` cone
/// directions, with `ϑ` uniform in `[−theta_box, theta_box]^p`.
pub fn re_constant_estimate(
    ev: &LikelihoodEvaluator<'_>,
    spec: ConeSpec,
    n_directions: usize,
    rng_seed: u64,
    theta_box: f64,
) -> Result<f64, TheoryError> {
    Ok(*re_constant_trace(ev, spec, n_directions, rng_seed, theta_box)?
        .last()
        .expect("at least one direction"))
}

/// The running minimum after each sampled direction.
pub fn re_constant_trace(
    ev: &LikelihoodEvaluator<'_>,
    spec: ConeSpec,
    n_directions: usize,
    rng_seed: u64,
    theta_box: f64,
) -> Result<Vec<f64>, TheoryError> {
    if n_directions == 0 {
        return invalid("n_directions must be at least 1");
    }
    if !(theta_box >= 0.0 && theta_box.is_finite()) {
        return invalid("theta_box must be nonnegative");
    }
    let p = ev.model().param_dim();
    let mut rng = trial_rng(rng_seed, 0);
    let quad = ev.quadratic_form();
    let mut best = f64::INFINITY;
    let mut trace = Vec::with_capacity(n_directions);
    for _ in 0..n_directions {
        let dir = sample_cone_direction(p, spec, &mut rng);
        let nrm = norm2(&dir);
        let ratio = match quad {
            Some(q) => {
                let v = nalgebra::DVector::from_column_slice(&dir);
                (v.dot(&(&q.hessian * &v)).max(0.0)).sqrt() / nrm
            }
            None => {
                let base: Vec<f64> = (0..p)
                    .map(|_| if theta_box > 0.0 { rng.random_range(-theta_box..=theta_box) } else { 0.0 })
                    .collect();
                let len: f64 = rng.random_range(0.05..=1.0) * theta_box.max(1e-3);
                let other: Vec<f64> = base.iter().zip(&dir).map(|(b, u)| b + len * u / nrm).collect();
                ev.drift_distance_sq(&other, &base)?.max(0.0).sqrt() / len
            }
        };
        best = best.min(ratio);
        trace.push(best);
    }
    Ok(trace)
}

/// `(1/T)∫(X_t)dt` has variance `(aT − 1 + e^{−aT}) / (a³T²)` under the
/// stationary scalar OU law with rate `a` and unit noise.
pub fn ou_time_average_variance(a: f64, horizon: f64) -> f64 {
    let at = a * horizon;
    (at - 1.0 + (-at).exp()) / (a.powi(3) * horizon * horizon)
}

/// How the time averages are centred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Centering {
    /// Subtract a known `E f(X_0)`.
    Known(f64),
    /// Subtract the grand mean over all trials.
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationRow {
    pub mu: f64,
    pub mgf: f64,
    pub mgf_se: f64,
    /// `exp(C μ² ‖f‖²_Lip / T)` at the user constant, if one was given.
    pub bound: Option<f64>,
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    pub threshold: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationTable {
    pub horizon: f64,
    pub lipschitz: f64,
    pub n_trials: usize,
    pub rows: Vec<ConcentrationRow>,
    /// Smallest `C ≥ 0` for which the bound holds at every grid `μ`.
    pub calibrated_c: f64,
    pub tail: Vec<TailRow>,
    /// Least-squares `(a1, a2)` in `P(S > u) ≈ exp(−T u² / (a1 + a2 u))`.
    pub tail_fit: Option<(f64, f64)>,
    /// Per-trial centred time averages `S`.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConcentrationSpec<'a> {
    pub model: &'a DriftModel,
    pub theta: &'a [f64],
    pub sim: SimConfig,
    pub n_trials: usize,
    /// Trials use indices `first_trial .. first_trial + n_trials` of the seed's stream family.
    pub first_trial: u64,
    pub mu_grid: Vec<f64>,
    pub lipschitz: f64,
    pub centering: Centering,
    pub user_c: Option<f64>,
}

/// Monte Carlo moment generating function of `S = (1/T)∫(f(X_t) − E f)dt`.
pub fn concentration_mc<F>(spec: &ConcentrationSpec<'_>, f: F) -> Result<ConcentrationTable, TheoryError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if spec.n_trials < 2 {
        return invalid("n_trials must be at least 2");
    }
    if !(spec.lipschitz >= 0.0 && spec.lipschitz.is_finite()) {
        return invalid("Lipschitz constant must be nonnegative");
    }
    if spec.mu_grid.iter().any(|m| !m.is_finite()) {
        return invalid("mu grid must be finite");
    }
    let mut sim = spec.sim.clone();
    sim.retain_increments = false;
    let horizon = sim.horizon;

    let (shift, known) = match spec.centering {
        Centering::Known(m) => (m, true),
        Centering::Pooled => {
            let probe = simulate_trial(spec.model, spec.theta, &sim, spec.first_trial)?;
            (f(probe.state(0)), false)
        }
    };
    let raw: Vec<f64> = (0..spec.n_trials as u64)
        .into_par_iter()
        .map(|k| -> Result<f64, TheoryError> {
            let path = simulate_trial(spec.model, spec.theta, &sim, spec.first_trial + k)?;
            let n = path.steps();
            let s = compensated_sum((0..n).map(|i| f(path.state(i)) - shift));
            Ok(s / n as f64)
        })
        .collect::<Result<_, _>>()?;
    let samples: Vec<f64> = if known {
        raw
    } else {
        let m = compensated_sum(raw.iter().copied()) / raw.len() as f64;
        raw.iter().map(|v| v - m).collect()
    };

    let n = samples.len() as f64;
    let lip2 = spec.lipschitz * spec.lipschitz;
    let mut rows = Vec::with_capacity(spec.mu_grid.len());
    let mut calibrated = 0.0f64;
    for &mu in &spec.mu_grid {
        let expo: Vec<f64> = samples.iter().map(|s| mu * s).collect();
        let top = expo.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        let scaled: Vec<f64> = expo.iter().map(|e| (e - top).exp()).collect();
        let mean_scaled = compensated_sum(scaled.iter().copied()) / n;
        let var_scaled = compensated_sum(scaled.iter().map(|v| (v - mean_scaled).powi(2))) / (n - 1.0);
        let log_mgf = top + mean_scaled.ln();
        let mgf = log_mgf.exp();
        let mgf_se = mgf * (var_scaled / n).sqrt() / mean_scaled;
        if mu != 0.0 && log_mgf > 0.0 {
            let need = if lip2 > 0.0 { horizon * log_mgf / (mu * mu * lip2) } else { f64::INFINITY };
            calibrated = calibrated.max(need);
        }
        let bound = spec.user_c.map(|c| (c * mu * mu * lip2 / horizon).exp());
        rows.push(ConcentrationRow {
            mu,
            mgf,
            mgf_se,
            bound,
            holds: bound.map(|b| log_mgf <= b.ln() + 1e-15),
        });
    }

    let (_, sd) = {
        let m = compensated_sum(samples.iter().copied()) / n;
        let v = compensated_sum(samples.iter().map(|s| (s - m).powi(2))) / (n - 1.0);
        (m, v.sqrt())
    };
    let mut tail = Vec::new();
    let mut fit_u = Vec::new();
    let mut fit_y = Vec::new();
    if sd > 0.0 {
        for mult in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
            let u = mult * sd;
            let count = samples.iter().filter(|s| **s > u).count();
            let q = count as f64 / n;
            tail.push(TailRow { threshold: u, frequency: q });
            if count >= 5 && q < 1.0 {
                fit_u.push(u);
                fit_y.push(horizon * u * u / -q.ln());
            }
        }
    }
    let tail_fit = linear_fit(&fit_u, &fit_y).map(|(a, b, _)| (a, b));

    Ok(ConcentrationTable {
        horizon,
        lipschitz: spec.lipschitz,
        n_trials: spec.n_trials,
        rows,
        calibrated_c: calibrated,
        tail,
        tail_fit,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportMetrics {
    pub l1_err: f64,
    pub l2_err: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub size_hat: usize,
}

/// Estimation errors and support recovery with `support(θ) = {j : |θ_j| > zero_tol}`.
/// An empty estimated support has precision 1; an empty true support has recall 1.
pub fn support_metrics(theta_hat: &[f64], theta0: &[f64], zero_tol: f64) -> Result<SupportMetrics, TheoryError> {
    if theta_hat.len() != theta0.len() {
        return invalid(format!("length mismatch: {} vs {}", theta_hat.len(), theta0.len()));
    }
    if !(zero_tol >= 0.0) {
        return invalid("zero_tol must be nonnegative");
    }
    let diff: Vec<f64> = theta_hat.iter().zip(theta0).map(|(a, b)| a - b).collect();
    let (mut tp, mut size_hat, mut size_true) = (0usize, 0usize, 0usize);
    for (a, b) in theta_hat.iter().zip(theta0) {
        let (ha, hb) = (a.abs() > zero_tol, b.abs() > zero_tol);
        size_hat += ha as usize;
        size_true += hb as usize;
        tp += (ha && hb) as usize;
    }
    let precision = if size_hat == 0 { 1.0 } else { tp as f64 / size_hat as f64 };
    let recall = if size_true == 0 { 1.0 } else { tp as f64 / size_true as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(SupportMetrics {
        l1_err: norm1(&diff),
        l2_err: norm2(&diff),
        precision,
        recall,
        f1,
        size_hat,
    })
}

/// Grid lower bound of `‖sup_{θ,ϑ} (1/T)∫ ḃ_θᵀ b_ϑ dt‖_∞` over all ordered pairs.
pub fn m_infinity_estimate(ev: &LikelihoodEvaluator<'_>, theta_grid: &[Vec<f64>]) -> Result<f64, TheoryError> {
    if theta_grid.is_empty() {
        return Err(LikelihoodError::EmptyGrid.into());
    }
    let mut best = 0.0f64;
    for th in theta_grid {
        for vt in theta_grid {
            let m = ev.cross_moment(th, vt)?;
            best = m.iter().fold(best, |acc, v| acc.max(v.abs()));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, InitialState};

    #[test]
    fn cone_examples() {
        let any = ConeSpec::new(1, 0.7).unwrap();
        assert!(cone_membership(&[1.0, 0.0, 0.0], any).unwrap());
        assert!(!cone_membership(&[1.0, 1.0, 1.0, 1.0], ConeSpec::new(1, 0.0).unwrap()).unwrap());
        assert!(cone_membership(&[2.0, 1.0, 1.0], ConeSpec::new(1, 3.0).unwrap()).unwrap());
        assert!(matches!(cone_membership(&[0.0, 0.0], any), Err(TheoryError::ZeroVector)));
    }

    #[test]
    fn top_s_ties_to_lowest_index() {
        assert_eq!(top_s_indices(&[1.0, -3.0, 3.0, 0.5], 2), vec![1, 2]);
        assert_eq!(top_s_indices(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
    }

    #[test]
    fn sampled_directions_lie_in_cone() {
        let spec = ConeSpec::new(3, 2.0).unwrap();
        let mut rng = trial_rng(4, 0);
        for _ in 0..500 {
            let x = sample_cone_direction(12, spec, &mut rng);
            assert!(cone_membership(&x, spec).unwrap());
        }
    }

    #[test]
    fn gamma_two_minimises_remainder_coefficient() {
        let coef = |g: f64| oracle_remainder(1, 1.0, g, 1.0);
        assert!((coef(2.0) - 32.0).abs() < 1e-12);
        for g in [0.5, 1.0, 1.9, 2.1, 3.0, 10.0] {
            assert!(coef(g) > coef(2.0));
        }
    }

    #[test]
    fn bounds_scale_with_lambda() {
        let mut b = BoundInputs { s0: 5, lambda: 0.1, k: 0.5, ..Default::default() };
        let one = error_bound_calculators(&b).unwrap();
        b.lambda = 0.2;
        let two = error_bound_calculators(&b).unwrap();
        assert!((two.l2_sq / one.l2_sq - 4.0).abs() < 1e-12);
        assert!((two.l1 / one.l1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lambda1_first_branch() {
        let b = BoundInputs { p: 10, horizon: 1e4, c: 1.0, gamma_43: 0.0, ..Default::default() };
        let (l1, _) = lambda1_t1_calculators(&b).unwrap();
        let l = default_big_l();
        let lt = (2.0 * l * 10.0).ln() + (2.0f64 / 0.05).ln();
        let expect = 4.0 * l * (lt / 2e4).sqrt();
        assert!((l1 - expect).abs() < 1e-12 * expect);
        let bad = BoundInputs { epsilon: 0.0, ..b };
        assert!(lambda1_t1_calculators(&bad).is_err());
    }

    #[test]
    fn support_metrics_conventions() {
        let t0 = [1.0, 0.0, -2.0];
        let m = support_metrics(&t0, &t0, 1e-8).unwrap();
        assert_eq!((m.l1_err, m.l2_err, m.precision, m.recall, m.f1), (0.0, 0.0, 1.0, 1.0, 1.0));
        let z = support_metrics(&[0.0; 3], &t0, 1e-8).unwrap();
        assert_eq!((z.precision, z.recall, z.size_hat), (1.0, 0.0, 0));
    }

    #[test]
    fn constant_function_has_unit_mgf() {
        let model = DriftModel::ornstein_uhlenbeck(1);
        let sim = SimConfig { horizon: 2.0, x0: InitialState::OuStationary, ..Default::default() };
        for centering in [Centering::Pooled, Centering::Known(0.3)] {
            let spec = ConcentrationSpec {
                model: &model,
                theta: &[1.0],
                sim: sim.clone(),
                n_trials: 20,
                first_trial: 0,
                mu_grid: vec![0.0, 0.5, 3.0],
                lipschitz: 0.0,
                centering,
                user_c: Some(1.0),
            };
            let tab = concentration_mc(&spec, |_| 0.3).unwrap();
            for r in &tab.rows {
                assert_eq!(r.mgf, 1.0);
                assert_eq!(r.holds, Some(true));
            }
            assert_eq!(tab.calibrated_c, 0.0);
        }
    }

    #[test]
    fn basic_inequality_trivial_at_estimate() {
        let model = DriftModel::ornstein_uhlenbeck(2);
        let theta0 = [1.0, 0.0, 0.3, 1.0];
        let path = simulate(&model, &theta0, &SimConfig { horizon: 5.0, ..Default::default() }).unwrap();
        let ev = LikelihoodEvaluator::new(&model, &path).unwrap();
        let th = [0.9, 0.1, 0.2, 1.1];
        let r = basic_inequality_check(&ev, &th, &th, &theta0, 0.1).unwrap();
        assert!(r.holds);
        assert!((r.lhs - r.rhs).abs() < 1e-12 * r.scale);
    }

    #[test]
    fn m_infinity_zero_drift() {
        let model = DriftModel::ornstein_uhlenbeck(2);
        let path = simulate(&model, &[1.0, 0.0, 0.0, 1.0], &SimConfig { horizon: 2.0, ..Default::default() }).unwrap();
        let ev = LikelihoodEvaluator::new(&model, &path).unwrap();
        assert_eq!(m_infinity_estimate(&ev, &[vec![0.0; 4]]).unwrap(), 0.0);
    }
}
