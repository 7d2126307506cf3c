//! Discretised Girsanov likelihood and the empirical quantities built on it.
//!
//! Every stochastic integral is a left-endpoint (Itô) sum over the grid,
//! `∫ f(X_t) dX_t ≈ Σ_i f(X_i)(X_{i+1} − X_i)`, and every time integral a
//! left Riemann sum. All sums are compensated.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{DriftModel, ModelError};
use crate::numeric::{dot, CompensatedSum, CompensatedVec};
use crate::sim::ObservedPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LikelihoodError {
    #[error("non-finite value encountered at grid step {0}")]
    NonFinite(usize),
    #[error("requires generated path: Brownian increments were not retained")]
    MissingIncrements,
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Model(#[from] ModelError),
}

const GRAD_BLOCK: usize = 32;

/// A smooth objective `θ ↦ f(θ)` with gradient, as consumed by the solvers.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> Result<f64, LikelihoodError>;
    /// Writes `∇f(θ)` into `grad` and returns `f(θ)`.
    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, LikelihoodError>;
    /// Like [`Objective::value_and_gradient`], and also writes a positive
    /// semidefinite curvature matrix into `curv`. `Ok(None)` when unavailable.
    fn value_gradient_curvature(
        &self,
        _theta: &[f64],
        _grad: &mut [f64],
        _curv: &mut DMatrix<f64>,
    ) -> Result<Option<f64>, LikelihoodError> {
        Ok(None)
    }
}

/// `f(θ) = ½ θᵀHθ + qᵀθ + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl Objective for QuadraticForm {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, theta: &[f64]) -> Result<f64, LikelihoodError> {
        let t = DVector::from_column_slice(theta);
        let v = 0.5 * t.dot(&(&self.hessian * &t)) + self.linear.dot(&t) + self.constant;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(LikelihoodError::NonFinite(0))
        }
    }

    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, LikelihoodError> {
        let t = DVector::from_column_slice(theta);
        let ht = &self.hessian * &t;
        for (g, (h, q)) in grad.iter_mut().zip(ht.iter().zip(self.linear.iter())) {
            *g = h + q;
        }
        let v = 0.5 * t.dot(&ht) + self.linear.dot(&t) + self.constant;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(LikelihoodError::NonFinite(0))
        }
    }
}

/// Likelihood functional of one drift family over one observed path.
pub struct LikelihoodEvaluator<'a> {
    model: &'a DriftModel,
    path: &'a ObservedPath,
    quadratic: OnceLock<Option<QuadraticForm>>,
}

impl<'a> LikelihoodEvaluator<'a> {
    pub fn new(model: &'a DriftModel, path: &'a ObservedPath) -> Result<Self, LikelihoodError> {
        if model.state_dim() != path.dim() {
            return Err(ModelError::DimensionMismatch {
                what: "path state",
                got: path.dim(),
                expected: model.state_dim(),
            }
            .into());
        }
        Ok(Self {
            model,
            path,
            quadratic: OnceLock::new(),
        })
    }

    pub fn model(&self) -> &DriftModel {
        self.model
    }

    pub fn path(&self) -> &ObservedPath {
        self.path
    }

    /// Observation window length `T`.
    pub fn horizon(&self) -> f64 {
        self.path.horizon()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<(), LikelihoodError> {
        if theta.len() != self.model.param_dim() {
            return Err(ModelError::DimensionMismatch {
                what: "theta",
                got: theta.len(),
                expected: self.model.param_dim(),
            }
            .into());
        }
        Ok(())
    }

    fn increments(&self) -> Result<&[f64], LikelihoodError> {
        self.path.increments().ok_or(LikelihoodError::MissingIncrements)
    }

    /// `L_T(θ) = (1/T) Σ b_θ(X_i)ᵀΔX_i + (1/2T) Σ ‖b_θ(X_i)‖² Δ`.
    pub fn neg_log_likelihood(&self, theta: &[f64]) -> Result<f64, LikelihoodError> {
        self.path_value_grad(theta, None, None)
    }

    /// `∇L_T(θ) = (1/T) Σ ḃ_θ(X_i)ᵀ (ΔX_i + b_θ(X_i) Δ)`.
    pub fn nll_gradient(&self, theta: &[f64]) -> Result<Vec<f64>, LikelihoodError> {
        let mut g = vec![0.0; self.model.param_dim()];
        self.path_value_grad(theta, Some(&mut g), None)?;
        Ok(g)
    }

    /// Curvature alongside value and gradient: the Gauss–Newton matrix
    /// `(1/T) Σ ḃ_θ(X_i)ᵀ ḃ_θ(X_i) Δ` plus the diagonal second-order term
    /// where the model has one. That term is kept whole when the sum is
    /// positive definite and only where positive otherwise.
    pub fn curvature(&self, theta: &[f64], grad: &mut [f64], curv: &mut DMatrix<f64>) -> Result<f64, LikelihoodError> {
        let p = self.model.param_dim();
        if grad.len() != p || curv.shape() != (p, p) {
            return Err(ModelError::DimensionMismatch {
                what: "gradient or curvature buffer",
                got: grad.len(),
                expected: p,
            }
            .into());
        }
        self.path_value_grad(theta, Some(grad), Some(curv))
    }

    fn path_value_grad(
        &self,
        theta: &[f64],
        grad: Option<&mut [f64]>,
        mut curv: Option<&mut DMatrix<f64>>,
    ) -> Result<f64, LikelihoodError> {
        self.check_theta(theta)?;
        let (d, p) = (self.model.state_dim(), self.model.param_dim());
        let dt = self.path.dt();
        let inv_t = 1.0 / self.horizon();
        let want_grad = grad.is_some();
        let mut ws = self.model.workspace();
        let mut value = CompensatedSum::new();
        // gradient terms are summed plainly in short blocks, blocks compensated
        let mut gacc = CompensatedVec::zeros(if want_grad { p } else { 0 });
        let mut block = vec![0.0; if want_grad { p } else { 0 }];
        let mut r = vec![0.0; d];
        if let Some(c) = curv.as_deref_mut() {
            c.fill(0.0);
        }
        let mut second = vec![0.0; if curv.is_some() { p } else { 0 }];
        for i in 0..self.path.steps() {
            let x = self.path.state(i);
            let xn = self.path.state(i + 1);
            self.model.prepare_step(theta, x, &mut ws, want_grad);
            let mut term = 0.0;
            for k in 0..d {
                let dx = xn[k] - x[k];
                let bk = ws.b[k];
                term += bk * dx + 0.5 * bk * bk * dt;
                r[k] = dx + bk * dt;
            }
            if !term.is_finite() {
                return Err(LikelihoodError::NonFinite(i));
            }
            value.add(term);
            if want_grad {
                self.model.jt_acc_prepared(x, &ws, &r, 1.0, &mut block);
                if let Some(c) = curv.as_deref_mut() {
                    self.model.curvature_acc_prepared(x, &ws, &r, dt, c, &mut second);
                }
                if (i + 1) % GRAD_BLOCK == 0 {
                    gacc.add_slice(&block);
                    block.fill(0.0);
                }
            }
        }
        if want_grad {
            gacc.add_slice(&block);
        }
        if let Some(g) = grad {
            for (o, v) in g.iter_mut().zip(gacc.values()) {
                *o = v * inv_t;
                if !o.is_finite() {
                    return Err(LikelihoodError::NonFinite(self.path.steps()));
                }
            }
        }
        if let Some(c) = curv {
            // exact Hessian when positive definite, otherwise only the
            // curvature-adding part of the second-order term
            if second.iter().any(|v| *v != 0.0) {
                let mut exact = c.clone();
                for (k, v) in second.iter().enumerate() {
                    exact[(k, k)] += v;
                }
                if exact.clone().cholesky().is_some() {
                    *c = exact;
                } else {
                    for (k, v) in second.iter().enumerate() {
                        c[(k, k)] += v.max(0.0);
                    }
                }
            }
            *c *= inv_t;
        }
        Ok(value.value() * inv_t)
    }

    /// Exact quadratic representation of `L_T` for families affine in θ.
    pub fn quadratic_form(&self) -> Option<&QuadraticForm> {
        self.quadratic
            .get_or_init(|| self.build_quadratic())
            .as_ref()
    }

    fn build_quadratic(&self) -> Option<QuadraticForm> {
        let (d, p) = (self.model.state_dim(), self.model.param_dim());
        let dt = self.path.dt();
        let inv_t = 1.0 / self.horizon();
        let n = self.path.steps();
        match self.model {
            DriftModel::OrnsteinUhlenbeck { .. } => {
                let mut gram = DMatrix::<f64>::zeros(d, d);
                let mut cross = DMatrix::<f64>::zeros(d, d); // (i, j): Σ x_j ΔX_i
                for s in 0..n {
                    let x = self.path.state(s);
                    let xn = self.path.state(s + 1);
                    for j in 0..d {
                        for jj in 0..d {
                            gram[(j, jj)] += x[j] * x[jj] * dt;
                        }
                        for i in 0..d {
                            cross[(i, j)] += x[j] * (xn[i] - x[i]);
                        }
                    }
                }
                let mut h = DMatrix::zeros(p, p);
                for j in 0..d {
                    for jj in 0..d {
                        let g = gram[(j, jj)] * inv_t;
                        for i in 0..d {
                            h[(j * d + i, jj * d + i)] = g;
                        }
                    }
                }
                let q = DVector::from_iterator(p, (0..p).map(|k| cross[(k % d, k / d)] * inv_t));
                Some(QuadraticForm {
                    hessian: h,
                    linear: q,
                    constant: 0.0,
                })
            }
            DriftModel::GeneralLinear(_) => {
                let zero = vec![0.0; p];
                let mut ws = self.model.workspace();
                let mut jac = DMatrix::zeros(d, p);
                let mut h = DMatrix::<f64>::zeros(p, p);
                let mut q = DVector::<f64>::zeros(p);
                let mut c = CompensatedSum::new();
                let mut r = DVector::<f64>::zeros(d);
                for s in 0..n {
                    let x = self.path.state(s);
                    let xn = self.path.state(s + 1);
                    // b at θ = 0 is the offset φ₀
                    self.model.prepare_step(&zero, x, &mut ws, false);
                    self.model.jacobian_into(&zero, x, &mut jac);
                    let mut cs = 0.0;
                    for k in 0..d {
                        let dx = xn[k] - x[k];
                        cs += ws.b[k] * dx + 0.5 * ws.b[k] * ws.b[k] * dt;
                        r[k] = dx + ws.b[k] * dt;
                    }
                    c.add(cs);
                    h.gemm_tr(dt, &jac, &jac, 1.0);
                    q.gemv_tr(1.0, &jac, &r, 1.0);
                }
                Some(QuadraticForm {
                    hessian: h * inv_t,
                    linear: q * inv_t,
                    constant: c.value() * inv_t,
                })
            }
            _ => None,
        }
    }

    /// `‖b_θ − b_ϑ‖²_T`.
    pub fn drift_distance_sq(&self, theta: &[f64], vartheta: &[f64]) -> Result<f64, LikelihoodError> {
        self.check_theta(theta)?;
        self.check_theta(vartheta)?;
        let d = self.model.state_dim();
        let dt = self.path.dt();
        let (mut b1, mut b2) = (vec![0.0; d], vec![0.0; d]);
        let mut acc = CompensatedSum::new();
        for i in 0..self.path.steps() {
            let x = self.path.state(i);
            self.model.drift_into(theta, x, &mut b1);
            self.model.drift_into(vartheta, x, &mut b2);
            let s: f64 = b1.iter().zip(&b2).map(|(a, b)| (a - b) * (a - b)).sum();
            acc.add(s * dt);
        }
        Ok(acc.value() / self.horizon())
    }

    /// `(1/T) Σ b_θ(X_i)ᵀ dW_i`.
    pub fn ito_term(&self, theta: &[f64]) -> Result<f64, LikelihoodError> {
        self.check_theta(theta)?;
        let w = self.increments()?;
        let d = self.model.state_dim();
        let mut b = vec![0.0; d];
        let mut acc = CompensatedSum::new();
        for i in 0..self.path.steps() {
            self.model.drift_into(theta, self.path.state(i), &mut b);
            acc.add(dot(&b, &w[i * d..(i + 1) * d]));
        }
        Ok(acc.value() / self.horizon())
    }

    /// `G(θ, ϑ) = (1/T) Σ (b_θ(X_i) − b_ϑ(X_i))ᵀ dW_i`.
    pub fn stochastic_term_g(&self, theta: &[f64], vartheta: &[f64]) -> Result<f64, LikelihoodError> {
        self.check_theta(theta)?;
        self.check_theta(vartheta)?;
        let w = self.increments()?;
        let d = self.model.state_dim();
        let (mut b1, mut b2) = (vec![0.0; d], vec![0.0; d]);
        let mut acc = CompensatedSum::new();
        for i in 0..self.path.steps() {
            let x = self.path.state(i);
            self.model.drift_into(theta, x, &mut b1);
            self.model.drift_into(vartheta, x, &mut b2);
            let s: f64 = b1
                .iter()
                .zip(&b2)
                .zip(&w[i * d..(i + 1) * d])
                .map(|((a, b), dw)| (a - b) * dw)
                .sum();
            acc.add(s);
        }
        Ok(acc.value() / self.horizon())
    }

    /// `(1/T) Σ ḃ_θ(X_i)ᵀ dW_i` ∈ ℝ^p.
    pub fn martingale_vector(&self, theta: &[f64]) -> Result<Vec<f64>, LikelihoodError> {
        self.check_theta(theta)?;
        let w = self.increments()?;
        let (d, p) = (self.model.state_dim(), self.model.param_dim());
        let mut ws = self.model.workspace();
        let mut acc = CompensatedVec::zeros(p);
        let mut step = vec![0.0; p];
        for i in 0..self.path.steps() {
            let x = self.path.state(i);
            self.model.prepare_step(theta, x, &mut ws, true);
            step.fill(0.0);
            self.model.jt_acc_prepared(x, &ws, &w[i * d..(i + 1) * d], 1.0, &mut step);
            acc.add_slice(&step);
        }
        let inv_t = 1.0 / self.horizon();
        Ok(acc.values().into_iter().map(|v| v * inv_t).collect())
    }

    /// Grid approximation (a lower bound) of
    /// `‖sup_θ (1/T) ∫ ḃ_θ(X_t)ᵀ dW_t‖_∞`. For families affine in θ the
    /// Jacobian is θ-free and the grid contents are irrelevant.
    pub fn martingale_sup_stat(&self, theta_grid: &[Vec<f64>]) -> Result<f64, LikelihoodError> {
        if theta_grid.is_empty() {
            return Err(LikelihoodError::EmptyGrid);
        }
        if self.model.is_linear_in_theta() {
            let zero = vec![0.0; self.model.param_dim()];
            return Ok(sup_abs(&self.martingale_vector(&zero)?));
        }
        let mut best = 0.0f64;
        for th in theta_grid {
            best = best.max(sup_abs(&self.martingale_vector(th)?));
        }
        Ok(best)
    }

    /// `(1/T) Σ ḃ_θ(X_i)ᵀ b_ϑ(X_i) Δ` ∈ ℝ^p.
    pub fn cross_moment(&self, theta: &[f64], vartheta: &[f64]) -> Result<Vec<f64>, LikelihoodError> {
        self.check_theta(theta)?;
        self.check_theta(vartheta)?;
        let (d, p) = (self.model.state_dim(), self.model.param_dim());
        let dt = self.path.dt();
        let mut ws = self.model.workspace();
        let mut bv = vec![0.0; d];
        let mut acc = CompensatedVec::zeros(p);
        let mut step = vec![0.0; p];
        for i in 0..self.path.steps() {
            let x = self.path.state(i);
            self.model.prepare_step(theta, x, &mut ws, true);
            self.model.drift_into(vartheta, x, &mut bv);
            step.fill(0.0);
            self.model.jt_acc_prepared(x, &ws, &bv, dt, &mut step);
            acc.add_slice(&step);
        }
        let inv_t = 1.0 / self.horizon();
        Ok(acc.values().into_iter().map(|v| v * inv_t).collect())
    }
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl Objective for LikelihoodEvaluator<'_> {
    fn dim(&self) -> usize {
        self.model.param_dim()
    }

    fn value(&self, theta: &[f64]) -> Result<f64, LikelihoodError> {
        match self.quadratic_form() {
            Some(q) => {
                self.check_theta(theta)?;
                q.value(theta)
            }
            None => self.neg_log_likelihood(theta),
        }
    }

    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, LikelihoodError> {
        match self.quadratic_form() {
            Some(q) => {
                self.check_theta(theta)?;
                q.value_and_gradient(theta, grad)
            }
            None => self.path_value_grad(theta, Some(grad), None),
        }
    }

    fn value_gradient_curvature(
        &self,
        theta: &[f64],
        grad: &mut [f64],
        curv: &mut DMatrix<f64>,
    ) -> Result<Option<f64>, LikelihoodError> {
        // quadratic families are cheap enough for plain proximal gradient
        if self.quadratic_form().is_some() {
            return Ok(None);
        }
        self.curvature(theta, grad, curv).map(Some)
    }
}

/// `⟨f, g⟩_T = (1/T) Σ f(X_i)ᵀ g(X_i) Δ`.
pub fn empirical_bilinear<F, G>(path: &ObservedPath, f: F, g: G) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut acc = CompensatedSum::new();
    for i in 0..path.steps() {
        let x = path.state(i);
        acc.add(dot(&f(x), &g(x)) * path.dt());
    }
    acc.value() / path.horizon()
}

/// `‖f‖_T = sqrt(⟨f, f⟩_T)`.
pub fn empirical_norm<F>(path: &ObservedPath, f: F) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut acc = CompensatedSum::new();
    for i in 0..path.steps() {
        let v = f(path.state(i));
        acc.add(dot(&v, &v) * path.dt());
    }
    (acc.value() / path.horizon()).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearBasis, VectorField};
    use crate::sim::{simulate, SimConfig};
    use std::sync::Arc;

    fn scalar_linear() -> DriftModel {
        let phi: VectorField = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0]);
        DriftModel::general_linear(LinearBasis::new(1, "x", vec![phi]))
    }

    #[test]
    fn two_point_constant_path() {
        let m = scalar_linear();
        let path = ObservedPath::new(1, 1.0, 0, vec![1.0, 1.0], None).unwrap();
        let ev = LikelihoodEvaluator::new(&m, &path).unwrap();
        for th in [0.0, 1.5, -2.0] {
            assert_eq!(ev.neg_log_likelihood(&[th]).unwrap(), th * th / 2.0);
            assert_eq!(ev.value(&[th]).unwrap(), th * th / 2.0);
        }
        assert_eq!(ev.neg_log_likelihood(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_drift_zero_increment_gradient_vanishes() {
        let m = DriftModel::sine_quadratic(2);
        let path = ObservedPath::new(2, 0.1, 0, vec![0.5, -0.5, 0.5, -0.5, 0.5, -0.5], None).unwrap();
        let ev = LikelihoodEvaluator::new(&m, &path).unwrap();
        assert_eq!(ev.nll_gradient(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn empirical_forms() {
        let path = ObservedPath::new(2, 0.5, 0, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0], None).unwrap();
        let unit = |_: &[f64]| vec![1.0, 0.0];
        assert!((empirical_bilinear(&path, unit, unit) - 1.0).abs() < 1e-15);
        let scalar = ObservedPath::new(1, 0.25, 0, vec![1.0; 5], None).unwrap();
        assert!((empirical_norm(&scalar, |x| x.to_vec()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn g_requires_increments_and_is_antisymmetric() {
        let m = DriftModel::ornstein_uhlenbeck(2);
        let cfg = SimConfig {
            horizon: 2.0,
            seed: 9,
            ..Default::default()
        };
        let th0 = [1.0, 0.0, 0.0, 1.0];
        let path = simulate(&m, &th0, &cfg).unwrap();
        let ev = LikelihoodEvaluator::new(&m, &path).unwrap();
        let a = [0.3, 0.1, -0.2, 2.0];
        assert_eq!(ev.stochastic_term_g(&a, &a).unwrap(), 0.0);
        let g1 = ev.stochastic_term_g(&a, &th0).unwrap();
        let g2 = ev.stochastic_term_g(&th0, &a).unwrap();
        assert!((g1 + g2).abs() < 1e-15);

        let bare = path.clone().without_increments();
        let ev2 = LikelihoodEvaluator::new(&m, &bare).unwrap();
        assert_eq!(ev2.stochastic_term_g(&a, &th0), Err(LikelihoodError::MissingIncrements));
        assert_eq!(ev2.martingale_sup_stat(&[a.to_vec()]), Err(LikelihoodError::MissingIncrements));
        assert_eq!(ev.martingale_sup_stat(&[]), Err(LikelihoodError::EmptyGrid));
    }

    #[test]
    fn quadratic_form_matches_path_evaluation() {
        let m = DriftModel::ornstein_uhlenbeck(3);
        let th0: Vec<f64> = vec![1.0, 0.2, 0.0, 0.0, 1.5, 0.3, 0.1, 0.0, 2.0];
        let path = simulate(&m, &th0, &SimConfig { horizon: 5.0, seed: 4, ..Default::default() }).unwrap();
        let ev = LikelihoodEvaluator::new(&m, &path).unwrap();
        let q = ev.quadratic_form().unwrap();
        let th: Vec<f64> = (0..9).map(|k| 0.1 * k as f64 - 0.3).collect();
        let a = ev.neg_log_likelihood(&th).unwrap();
        let b = q.value(&th).unwrap();
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        let ga = ev.nll_gradient(&th).unwrap();
        let mut gb = vec![0.0; 9];
        q.value_and_gradient(&th, &mut gb).unwrap();
        for (x, y) in ga.iter().zip(&gb) {
            assert!((x - y).abs() < 1e-12);
        }

        let gl = DriftModel::general_linear(LinearBasis::diagonal(3, 1.0));
        let path = simulate(&gl, &[0.5, 0.0, 1.0], &SimConfig { horizon: 5.0, seed: 4, ..Default::default() }).unwrap();
        let ev = LikelihoodEvaluator::new(&gl, &path).unwrap();
        let th = [0.2, -0.4, 0.9];
        let a = ev.neg_log_likelihood(&th).unwrap();
        let b = ev.quadratic_form().unwrap().value(&th).unwrap();
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = DriftModel::ornstein_uhlenbeck(2);
        let path = ObservedPath::new(1, 1.0, 0, vec![0.0, 1.0], None).unwrap();
        assert!(LikelihoodEvaluator::new(&m, &path).is_err());
        let path = ObservedPath::new(2, 1.0, 0, vec![0.0, 1.0, 1.0, 1.0], None).unwrap();
        let ev = LikelihoodEvaluator::new(&m, &path).unwrap();
        assert!(ev.neg_log_likelihood(&[1.0]).is_err());
    }
}
