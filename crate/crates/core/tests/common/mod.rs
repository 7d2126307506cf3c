//! Shared helpers for the integration tests: independent reference
//! implementations that do not go through the crate's solvers.
#![allow(dead_code, clippy::needless_range_loop)]

use driftlasso::likelihood::{LikelihoodEvaluator, QuadraticForm};
use driftlasso::model::DriftModel;
use driftlasso::sim::{simulate_trial, InitialState, ObservedPath, SimConfig};

pub fn sim_cfg(horizon: f64, seed: u64, x0: InitialState) -> SimConfig {
    SimConfig {
        horizon,
        steps_per_unit: 100,
        seed,
        burn_in: 5.0,
        x0,
        retain_increments: true,
        zero_noise: false,
    }
}

pub fn path(model: &DriftModel, theta: &[f64], horizon: f64, seed: u64, trial: u64) -> ObservedPath {
    simulate_trial(model, theta, &sim_cfg(horizon, seed, InitialState::BurnedIn), trial).unwrap()
}

/// `A = a·I` flattened column-major.
pub fn scaled_identity(d: usize, a: f64) -> Vec<f64> {
    let mut t = vec![0.0; d * d];
    for i in 0..d {
        t[i * d + i] = a;
    }
    t
}

/// Central differences of the negative log-likelihood.
pub fn fd_gradient(ev: &LikelihoodEvaluator<'_>, theta: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    let mut t = theta.to_vec();
    for j in 0..theta.len() {
        t[j] = theta[j] + h;
        let up = ev.neg_log_likelihood(&t).unwrap();
        t[j] = theta[j] - h;
        let down = ev.neg_log_likelihood(&t).unwrap();
        t[j] = theta[j];
        g[j] = (up - down) / (2.0 * h);
    }
    g
}

/// `½θᵀHθ + qᵀθ + c + λ‖θ‖₁`.
pub fn lasso_objective(q: &QuadraticForm, theta: &[f64], lambda: f64) -> f64 {
    let p = theta.len();
    let mut v = q.constant;
    for i in 0..p {
        v += q.linear[i] * theta[i];
        for j in 0..p {
            v += 0.5 * theta[i] * q.hessian[(i, j)] * theta[j];
        }
        v += lambda * theta[i].abs();
    }
    v
}

/// Cyclic coordinate descent on the Lasso for a quadratic likelihood,
/// run until a full sweep moves no coordinate by more than `1e-15`.
pub fn coordinate_descent(q: &QuadraticForm, lambda: f64) -> Vec<f64> {
    let p = q.linear.len();
    let mut theta = vec![0.0; p];
    for _ in 0..1_000_000 {
        let mut moved = 0.0f64;
        for j in 0..p {
            let mut r = q.linear[j];
            for k in 0..p {
                if k != j {
                    r += q.hessian[(j, k)] * theta[k];
                }
            }
            let z = -r;
            let new = z.signum() * (z.abs() - lambda).max(0.0) / q.hessian[(j, j)];
            moved = moved.max((new - theta[j]).abs());
            theta[j] = new;
        }
        if moved < 1e-15 {
            break;
        }
    }
    theta
}

/// Direct loop over grid steps: `(1/T) Σ f(X_i)ᵀ g(X_i) Δ`.
pub fn riemann<F: Fn(&[f64]) -> Vec<f64>, G: Fn(&[f64]) -> Vec<f64>>(path: &ObservedPath, f: F, g: G) -> f64 {
    let mut s = 0.0;
    for i in 0..path.steps() {
        let x = path.state(i);
        let (a, b) = (f(x), g(x));
        s += a.iter().zip(&b).map(|(u, v)| u * v).sum::<f64>() * path.dt();
    }
    s / path.horizon()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
