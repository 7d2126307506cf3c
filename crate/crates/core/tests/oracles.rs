//! Reference values and independent re-derivations. Frozen constants were
//! computed once with 50-digit arithmetic.
#![allow(clippy::excessive_precision)]

mod common;

use common::*;
use driftlasso::estimators::{fit_lasso, fit_mle, lambda_max, SolverConfig};
use driftlasso::likelihood::LikelihoodEvaluator;
use driftlasso::model::{h_dk, h_function, DriftModel, LinearBasis};
use driftlasso::numeric::mean_and_se;
use driftlasso::sim::{ou_stationary_covariance, simulate_trial, InitialState, ObservedPath, SimConfig};
use driftlasso::theory::{
    default_big_l, error_bound_calculators, error_bounds_lmin, lambda1_t1_calculators, m_infinity_estimate,
    ou_time_average_variance, re_constant_trace, sample_cone_direction, support_metrics, BoundInputs, ConeSpec,
};
use nalgebra::{DMatrix, DVector};

fn base_inputs() -> BoundInputs {
    BoundInputs {
        s0: 5,
        p: 100,
        horizon: 20.0,
        lambda: 0.1,
        gamma: 2.0,
        k: 0.5,
        l_min: 1.0,
        epsilon: 0.05,
        epsilon0: None,
        c: 1.0,
        big_l: default_big_l(),
        delta1: 1.0,
        delta2: 1.0,
        gamma_43: 1.0,
        gamma_2: 1.0,
        c0: None,
        m_inf: 1.0,
    }
}

#[test]
fn error_bounds_match_frozen_values() {
    let b = error_bound_calculators(&base_inputs()).unwrap();
    assert!(rel_err(b.l2_sq, 25.6) < 1e-12, "{}", b.l2_sq);
    assert!(rel_err(b.l1, 67.882250993908562342481058762065507771344250018094) < 1e-12, "{}", b.l1);
    assert!(rel_err(b.l0, 1357.6450198781712468496211752413101554268850003619) < 1e-12, "{}", b.l0);
}

#[test]
fn lmin_variant_matches_frozen_values_and_k_half() {
    let inputs = BoundInputs {
        l_min: 0.8,
        k: 0.4,
        ..base_inputs()
    };
    let a = error_bounds_lmin(&inputs).unwrap();
    let b = error_bound_calculators(&inputs).unwrap();
    assert!(rel_err(a.l2_sq, 62.5) < 1e-12, "{}", a.l2_sq);
    assert!(rel_err(a.l1, 106.06601717798212866012665431572735589272539065327) < 1e-12, "{}", a.l1);
    assert!(rel_err(a.l2_sq, b.l2_sq) < 1e-12 && rel_err(a.l1, b.l1) < 1e-12);
}

#[test]
fn lambda1_t1_match_frozen_values() {
    assert!(rel_err(default_big_l(), 69.817370576237730753992030478925753282562192790834) < 1e-14);
    let (l1, t1) = lambda1_t1_calculators(&base_inputs()).unwrap();
    assert!(rel_err(l1, 223.07555172034394704035678109703259573766652691544) < 1e-12, "{l1}");
    assert!(rel_err(t1, 2685646253098.1898245357044277647684267205390260823) < 1e-12, "{t1}");
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn ou_time_average_variance_matches_double_integral() {
    for (a, t) in [(1.0, 5.0), (2.0, 3.0), (0.5, 10.0)] {
        let cov = |u: f64| (-a * u).exp() / (2.0 * a);
        let inner = |tt: f64| simpson(|s| cov(tt - s), 0.0, tt, 400);
        let quad = 2.0 * simpson(inner, 0.0, t, 400) / (t * t);
        let closed = ou_time_average_variance(a, t);
        assert!(rel_err(closed, quad) < 1e-8, "a={a} T={t}: {closed} vs {quad}");
    }
}

#[test]
fn lyapunov_two_by_two() {
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
    let s = ou_stationary_covariance(&a).unwrap();
    let expect = [[1.0 / 3.0, -1.0 / 6.0], [-1.0 / 6.0, 0.5]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((s[(i, j)] - expect[i][j]).abs() < 1e-14);
        }
    }
}

#[test]
fn scalar_mle_solves_normal_equation() {
    let model = DriftModel::general_linear(LinearBasis::diagonal(1, 0.0));
    let path = path(&model, &[1.5], 50.0, 7, 0);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..path.steps() {
        let x = path.state(i)[0];
        num += x * (path.state(i + 1)[0] - x);
        den += x * x * path.dt();
    }
    let oracle = -num / den;
    let ev = LikelihoodEvaluator::new(&model, &path).unwrap();
    let cfg = SolverConfig {
        tol: 1e-13,
        ..SolverConfig::default()
    };
    let fit = fit_mle(&ev, &cfg, &[0.0]).unwrap();
    assert!((fit.theta_hat.as_slice()[0] - oracle).abs() < 1e-8);
}

#[test]
fn ou_mle_matches_dense_normal_equations() {
    let d = 3;
    let model = DriftModel::ornstein_uhlenbeck(d);
    let mut theta0 = scaled_identity(d, 1.0);
    theta0[3] = 0.4;
    let path = path(&model, &theta0, 30.0, 3, 0);
    // b = A x = (xᵀ ⊗ I) vec(A)
    let p = d * d;
    let mut h = DMatrix::<f64>::zeros(p, p);
    let mut q = DVector::<f64>::zeros(p);
    for i in 0..path.steps() {
        let x = path.state(i);
        let mut j = DMatrix::<f64>::zeros(d, p);
        for c in 0..d {
            for r in 0..d {
                j[(r, c * d + r)] = x[c];
            }
        }
        let dx = DVector::from_iterator(d, (0..d).map(|k| path.state(i + 1)[k] - x[k]));
        h += j.transpose() * &j * path.dt();
        q += j.transpose() * dx;
    }
    h /= path.horizon();
    q /= path.horizon();
    let oracle = h.clone().lu().solve(&(-&q)).unwrap();

    let ev = LikelihoodEvaluator::new(&model, &path).unwrap();
    let qf = ev.quadratic_form().unwrap();
    assert!((&qf.hessian - &h).amax() < 1e-10 * h.amax());
    assert!((&qf.linear - &q).amax() < 1e-10 * (1.0 + q.amax()));
    let cfg = SolverConfig {
        tol: 1e-14,
        max_iter: 100_000,
        ..SolverConfig::default()
    };
    let fit = fit_mle(&ev, &cfg, &vec![0.0; p]).unwrap();
    for (a, b) in fit.theta_hat.as_slice().iter().zip(oracle.iter()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn lasso_matches_coordinate_descent_on_small_instance() {
    let model = DriftModel::ornstein_uhlenbeck(2);
    let path = path(&model, &[1.0, 0.3, 0.0, 1.5], 10.0, 11, 0);
    let ev = LikelihoodEvaluator::new(&model, &path).unwrap();
    let q = ev.quadratic_form().unwrap();
    let lmax = lambda_max(&ev).unwrap();
    let cfg = SolverConfig {
        tol: 1e-14,
        max_iter: 100_000,
        ..SolverConfig::default()
    };
    for frac in [0.05, 0.3, 0.7] {
        let lam = frac * lmax;
        let cd = coordinate_descent(q, lam);
        let fit = fit_lasso(&ev, lam, &cfg, &[0.0; 4]).unwrap();
        for (a, b) in fit.theta_hat.as_slice().iter().zip(&cd) {
            assert!((a - b).abs() < 1e-8, "λ={lam}: {a} vs {b}");
        }
    }
    let fit = fit_lasso(&ev, lmax * 1.0001, &cfg, &[1.0; 4]).unwrap();
    assert!(fit.theta_hat.as_slice().iter().all(|v| *v == 0.0));
}

#[test]
fn re_trace_is_min_of_rayleigh_quotients() {
    let model = DriftModel::ornstein_uhlenbeck(2);
    let path = path(&model, &[1.0, 0.5, -0.2, 2.0], 20.0, 5, 0);
    let ev = LikelihoodEvaluator::new(&model, &path).unwrap();
    let spec = ConeSpec::new(4, 0.0).unwrap();
    let trace = re_constant_trace(&ev, spec, 300, 9, 1.0).unwrap();

    let h = ev.quadratic_form().unwrap().hessian.clone();
    let mut rng = driftlasso::sim::trial_rng(9, 0);
    let mut best = f64::INFINITY;
    for (i, t) in trace.iter().enumerate() {
        let u = DVector::from_vec(sample_cone_direction(4, spec, &mut rng));
        best = best.min((u.dot(&(&h * &u)) / u.dot(&u)).sqrt());
        assert!(rel_err(*t, best) < 1e-12, "direction {i}");
    }
    let eig = h.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min().sqrt(), eig.max().sqrt());
    let last = *trace.last().unwrap();
    assert!(last >= lo * (1.0 - 1e-12) && last <= hi * (1.0 + 1e-12));
}

#[test]
fn m_infinity_single_point_matches_direct_loop() {
    let d = 2;
    let model = DriftModel::sine_quadratic(d);
    let theta = [0.8, -0.3, 0.5, 1.2];
    let path = path(&model, &theta, 5.0, 2, 0);
    let ev = LikelihoodEvaluator::new(&model, &path).unwrap();
    let got = m_infinity_estimate(&ev, &[theta.to_vec()]).unwrap();

    let mut acc = vec![0.0; d * d];
    for s in 0..path.steps() {
        let x = path.state(s);
        for i in 0..d {
            let bi: f64 = (0..d).map(|j| h_function(x[j], theta[j * d + i])).sum();
            for j in 0..d {
                acc[j * d + i] += h_dk(x[j], theta[j * d + i]) * bi * path.dt();
            }
        }
    }
    let oracle = acc.iter().fold(0.0f64, |m, v| m.max((v / path.horizon()).abs()));
    assert!(rel_err(got, oracle) < 1e-10, "{got} vs {oracle}");
}

#[test]
fn martingale_statistic_scalar_direct_loop() {
    let model = DriftModel::general_linear(LinearBasis::diagonal(1, 0.0));
    let path = path(&model, &[1.0], 10.0, 4, 0);
    let ev = LikelihoodEvaluator::new(&model, &path).unwrap();
    let w = path.increments().unwrap();
    let direct: f64 = (0..path.steps()).map(|i| path.state(i)[0] * w[i]).sum::<f64>() / path.horizon();
    let got = ev.martingale_sup_stat(&[vec![3.0]]).unwrap();
    assert!(rel_err(got, direct.abs()) < 1e-10);
}

#[test]
fn support_metrics_match_naive_counts() {
    let mut rng = driftlasso::sim::trial_rng(1, 0);
    use rand::Rng;
    for _ in 0..200 {
        let p = rng.random_range(1..12);
        let draw = |rng: &mut rand_chacha::ChaCha20Rng| -> Vec<f64> {
            (0..p)
                .map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-2.0..2.0) })
                .collect()
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let m = support_metrics(&a, &b, 1e-8).unwrap();
        let sa: Vec<usize> = (0..p).filter(|&j| a[j].abs() > 1e-8).collect();
        let sb: Vec<usize> = (0..p).filter(|&j| b[j].abs() > 1e-8).collect();
        let tp = sa.iter().filter(|j| sb.contains(j)).count() as f64;
        let prec = if sa.is_empty() { 1.0 } else { tp / sa.len() as f64 };
        let rec = if sb.is_empty() { 1.0 } else { tp / sb.len() as f64 };
        assert_eq!(m.size_hat, sa.len());
        assert!((m.precision - prec).abs() < 1e-15 && (m.recall - rec).abs() < 1e-15);
        let l1: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!((m.l1_err - l1).abs() < 1e-12);
    }
}

fn stationary_moments(steps_per_unit: usize, seed: u64) -> ((f64, f64), (f64, f64)) {
    let model = DriftModel::ornstein_uhlenbeck(1);
    let cfg = SimConfig {
        horizon: 20_000.0,
        steps_per_unit,
        seed,
        burn_in: 10.0,
        x0: InitialState::BurnedIn,
        retain_increments: false,
        zero_noise: false,
    };
    let path = simulate_trial(&model, &[1.0], &cfg, 0).unwrap();
    // batch means over blocks of 100 time units
    let block = 100 * steps_per_unit;
    let (mut means, mut seconds) = (Vec::new(), Vec::new());
    for b in 0..path.steps() / block {
        let xs: Vec<f64> = (b * block..(b + 1) * block).map(|i| path.state(i)[0]).collect();
        means.push(xs.iter().sum::<f64>() / block as f64);
        seconds.push(xs.iter().map(|x| x * x).sum::<f64>() / block as f64);
    }
    (mean_and_se(&means), mean_and_se(&seconds))
}

#[test]
fn long_run_ou_moments() {
    let dt = 0.01;
    let ((m, m_se), (v, v_se)) = stationary_moments(100, 21);
    assert!(m.abs() < 0.02 && m.abs() < 4.0 * m_se.max(1e-3), "mean {m} ± {m_se}");
    // Euler stationary variance 1/(2a − a²Δ)
    let euler = 1.0 / (2.0 - dt);
    assert!((v - euler).abs() < 4.0 * v_se, "var {v} ± {v_se}");
    assert!((v - 0.5).abs() < 4.0 * v_se + (euler - 0.5), "var {v}");
}

#[test]
fn grid_refinement_changes_moments_within_noise() {
    let (_, (v1, s1)) = stationary_moments(100, 31);
    let (_, (v2, s2)) = stationary_moments(200, 32);
    assert!((v1 - v2).abs() < 4.0 * (s1 * s1 + s2 * s2).sqrt(), "{v1} vs {v2}");
}

fn stationary_paths(theta: &[f64], n: usize, horizon: f64) -> Vec<ObservedPath> {
    let model = DriftModel::ornstein_uhlenbeck(2);
    let cfg = sim_cfg(horizon, 99, InitialState::OuStationary);
    (0..n as u64).map(|k| simulate_trial(&model, theta, &cfg, k).unwrap()).collect()
}

#[test]
fn stochastic_term_has_mean_zero() {
    let model = DriftModel::ornstein_uhlenbeck(2);
    let theta0 = [1.0, 0.2, 0.0, 1.5];
    let other = [0.5, -0.4, 0.7, 1.0];
    let gs: Vec<f64> = stationary_paths(&theta0, 500, 5.0)
        .iter()
        .map(|p| LikelihoodEvaluator::new(&model, p).unwrap().stochastic_term_g(&other, &theta0).unwrap())
        .collect();
    let (m, se) = mean_and_se(&gs);
    assert!(m.abs() < 4.0 * se, "{m} ± {se}");
}

#[test]
fn expected_likelihood_gap_is_half_drift_distance() {
    let model = DriftModel::ornstein_uhlenbeck(2);
    let theta0 = [1.0, 0.2, 0.0, 1.5];
    let other = [0.5, -0.4, 0.7, 1.0];
    let gaps: Vec<f64> = stationary_paths(&theta0, 200, 20.0)
        .iter()
        .map(|p| {
            let ev = LikelihoodEvaluator::new(&model, p).unwrap();
            ev.neg_log_likelihood(&other).unwrap() - ev.neg_log_likelihood(&theta0).unwrap()
        })
        .collect();
    let (m, se) = mean_and_se(&gaps);
    // ½ tr(D Σ Dᵀ) with D = A − A₀ under the stationary law
    let a0 = DMatrix::from_column_slice(2, 2, &theta0);
    let dm = DMatrix::from_column_slice(2, 2, &other) - &a0;
    let sigma = ou_stationary_covariance(&a0).unwrap();
    let expect = 0.5 * (&dm * sigma * dm.transpose()).trace();
    assert!((m - expect).abs() < 4.0 * se + 0.01 * expect, "{m} ± {se} vs {expect}");
}

fn sine_problem(d: usize, horizon: f64, seed: u64) -> (DriftModel, Vec<f64>, ObservedPath) {
    let m = DriftModel::sine_quadratic(d);
    let mut th0 = vec![0.0; d * d];
    for i in 0..d {
        th0[i * d + i] = 1.5;
    }
    th0[1] = 0.7;
    th0[d + 2] = -0.9;
    let p = path(&m, &th0, horizon, seed, 0);
    (m, th0, p)
}

/// Exact Hessian of the SineQuadratic likelihood by a direct loop.
fn sine_hessian_direct(m: &DriftModel, th: &[f64], path: &ObservedPath) -> DMatrix<f64> {
    let d = m.state_dim();
    let p = d * d;
    let dt = path.dt();
    let mut h = DMatrix::zeros(p, p);
    for s in 0..path.steps() {
        let (x, xn) = (path.state(s), path.state(s + 1));
        let b = m.drift(th, x).unwrap();
        for i in 0..d {
            let r = xn[i] - x[i] + b[i] * dt;
            for j in 0..d {
                let k = j * d + i;
                h[(k, k)] -= r * (th[k] / x[j]).sin();
                for jj in 0..d {
                    h[(k, jj * d + i)] += dt * h_dk(x[j], th[k]) * h_dk(x[jj], th[jj * d + i]);
                }
            }
        }
    }
    h / path.horizon()
}

#[test]
fn sine_curvature_matches_direct_hessian() {
    let d = 4;
    let p = d * d;
    let (m, th0, path) = sine_problem(d, 20.0, 3);
    let ev = LikelihoodEvaluator::new(&m, &path).unwrap();
    let (mut exact_seen, mut clamped_seen) = (0, 0);
    for (shift, scale) in [(0.0, 0.0), (1.7, 0.05), (0.4, 0.3), (0.9, 1.5), (2.2, 2.5)] {
        let th: Vec<f64> = th0
            .iter()
            .enumerate()
            .map(|(k, v)| v + scale * ((k as f64) * 1.3 + shift).sin())
            .collect();
        let mut g = vec![0.0; p];
        let mut c = DMatrix::zeros(p, p);
        let v = ev.curvature(&th, &mut g, &mut c).unwrap();
        assert!(rel_err(v, ev.neg_log_likelihood(&th).unwrap()) < 1e-12);
        let grad = ev.nll_gradient(&th).unwrap();
        assert!(g.iter().zip(&grad).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs())));
        let hx = sine_hessian_direct(&m, &th, &path);
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    assert!((hx[(i, j)] - c[(i, j)]).abs() < 1e-10, "({i},{j})");
                }
            }
        }
        if hx.clone().cholesky().is_some() {
            exact_seen += 1;
            for k in 0..p {
                assert!((hx[(k, k)] - c[(k, k)]).abs() < 1e-10, "diag {k}");
            }
        } else {
            clamped_seen += 1;
            for k in 0..p {
                assert!(c[(k, k)] >= hx[(k, k)] - 1e-10, "diag {k}");
            }
            assert!(c.clone().cholesky().is_some() || c.symmetric_eigenvalues().min() > -1e-10);
        }
    }
    assert!(exact_seen >= 1 && clamped_seen >= 1, "{exact_seen} exact, {clamped_seen} clamped");
}

#[test]
fn curvature_steps_do_not_change_the_optimum() {
    let d = 4;
    let (m, _, path) = sine_problem(d, 20.0, 5);
    let ev = LikelihoodEvaluator::new(&m, &path).unwrap();
    let with = SolverConfig::default();
    let without = SolverConfig {
        newton_steps: 0,
        max_iter: 100_000,
        ..SolverConfig::default()
    };
    let lmax = lambda_max(&ev).unwrap();
    let init = vec![0.0; d * d];
    for frac in [0.0, 0.05, 0.3] {
        let (a, b) = if frac == 0.0 {
            (fit_mle(&ev, &with, &init).unwrap(), fit_mle(&ev, &without, &init).unwrap())
        } else {
            (
                fit_lasso(&ev, frac * lmax, &with, &init).unwrap(),
                fit_lasso(&ev, frac * lmax, &without, &init).unwrap(),
            )
        };
        assert!(a.converged && b.converged, "λ = {frac}·λmax");
        assert!((a.objective() - b.objective()).abs() <= 1e-7 * a.scale, "λ = {frac}·λmax");
        assert!(a.iterations < b.iterations);
        if frac > 0.0 {
            let za: Vec<bool> = a.theta_hat.iter().map(|v| *v == 0.0).collect();
            let zb: Vec<bool> = b.theta_hat.iter().map(|v| *v == 0.0).collect();
            assert_eq!(za, zb, "support at λ = {frac}·λmax");
        }
    }
}
