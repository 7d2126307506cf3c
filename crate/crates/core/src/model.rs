//! Parametric drift families `b_θ : ℝ^d → ℝ^d` with their θ-Jacobians.
//!
//! Matrix-valued parameters (`OrnsteinUhlenbeck`, `SineQuadratic`) are stored
//! as `θ = vect(A)` in column-major order: `θ[j * d + i] = A[i][j]`.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::numeric::{dot, norm1, norm2};

/// θ-Jacobian of the drift: a `d × p` matrix whose column `j` is `∂b_θ/∂θ_j`.
pub type JacobianMatrix = DMatrix<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("non-finite parameter entry at index {0}")]
    NonFiniteParameter(usize),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Parameter vector θ ∈ ℝ^p.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteParameter(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(p: usize) -> Self {
        Self(vec![0.0; p])
    }

    /// Column-major vectorisation of a row-major `d × d` matrix.
    pub fn from_matrix_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let d = rows.len();
        let mut v = vec![0.0; d * d];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(ModelError::DimensionMismatch {
                    what: "matrix row",
                    got: row.len(),
                    expected: d,
                });
            }
            for (j, a) in row.iter().enumerate() {
                v[j * d + i] = *a;
            }
        }
        Self::new(v)
    }

    /// Inverse of [`ParamVector::from_matrix_rows`]; `None` unless `p` is a square.
    pub fn to_matrix_rows(&self) -> Option<Vec<Vec<f64>>> {
        let d = (self.0.len() as f64).sqrt().round() as usize;
        if d * d != self.0.len() {
            return None;
        }
        Some(
            (0..d)
                .map(|i| (0..d).map(|j| self.0[j * d + i]).collect())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Indices with `|θ_i| > tol`.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > tol)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn l0(&self, tol: f64) -> usize {
        self.0.iter().filter(|v| v.abs() > tol).count()
    }

    pub fn l1(&self) -> f64 {
        norm1(&self.0)
    }

    pub fn l2(&self) -> f64 {
        norm2(&self.0)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    /// Unchecked conversion; prefer [`ParamVector::new`] for external input.
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `h(x, k) = x² sin(k / x)`, extended continuously by `h(0, k) = 0`.
#[inline]
pub fn h_function(x: f64, k: f64) -> f64 {
    if x.abs() < 1e-300 {
        0.0
    } else {
        x * x * (k / x).sin()
    }
}

/// `∂h/∂k (x, k) = x cos(k / x)`, with value 0 at `x = 0`.
#[inline]
pub fn h_dk(x: f64, k: f64) -> f64 {
    if x.abs() < 1e-300 {
        0.0
    } else {
        x * (k / x).cos()
    }
}

/// Vector field callback `ℝ^d → ℝ^d` writing into its output slice.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Basis for the linear family `b_θ = φ₀ + Σ_j θ_j φ_j`.
#[derive(Clone)]
pub struct LinearBasis {
    d: usize,
    name: String,
    offset: Option<VectorField>,
    funcs: Vec<VectorField>,
    lipschitz: Option<Vec<f64>>,
}

impl fmt::Debug for LinearBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearBasis")
            .field("d", &self.d)
            .field("name", &self.name)
            .field("p", &self.funcs.len())
            .field("has_offset", &self.offset.is_some())
            .finish()
    }
}

impl LinearBasis {
    pub fn new(d: usize, name: impl Into<String>, funcs: Vec<VectorField>) -> Self {
        Self {
            d,
            name: name.into(),
            offset: None,
            funcs,
            lipschitz: None,
        }
    }

    pub fn with_offset(mut self, offset: VectorField) -> Self {
        self.offset = Some(offset);
        self
    }

    pub fn with_lipschitz(mut self, constants: Vec<f64>) -> Self {
        self.lipschitz = Some(constants);
        self
    }

    /// `φ₀(x) = baseline · x`, `φ_j(x) = x_j e_j` (p = d): a diagonal
    /// Ornstein–Uhlenbeck drift `(baseline·I + diag θ) x`.
    pub fn diagonal(d: usize, baseline: f64) -> Self {
        let funcs = (0..d)
            .map(|j| -> VectorField {
                Arc::new(move |x: &[f64], out: &mut [f64]| {
                    out.fill(0.0);
                    out[j] = x[j];
                })
            })
            .collect();
        let mut basis = Self::new(d, format!("diagonal(baseline={baseline})"), funcs)
            .with_lipschitz(vec![1.0; d]);
        if baseline != 0.0 {
            basis = basis.with_offset(Arc::new(move |x: &[f64], out: &mut [f64]| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = baseline * v;
                }
            }));
        }
        basis
    }

    pub fn lipschitz(&self) -> Option<&[f64]> {
        self.lipschitz.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// A potential `V_θ` whose x-gradient is the drift (`b_θ = ∇V_θ`).
pub trait Potential: Send + Sync {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn name(&self) -> String;
    fn value(&self, theta: &[f64], x: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]);
    /// `∂(∇_x V_θ)/∂θ` as a `d × p` matrix.
    fn gradient_theta_jacobian(&self, theta: &[f64], x: &[f64], out: &mut JacobianMatrix);
}

/// `V_θ(x) = Σ_i x_i²/2 + log cosh(θ_i x_i)` with `p = d`.
///
/// The drift `x_i + θ_i tanh(θ_i x_i)` is strongly monotone with `M = 1`
/// for every θ.
#[derive(Debug, Clone, Copy)]
pub struct LogCoshPotential {
    pub d: usize,
}

fn log_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl Potential for LogCoshPotential {
    fn state_dim(&self) -> usize {
        self.d
    }
    fn param_dim(&self) -> usize {
        self.d
    }
    fn name(&self) -> String {
        "logcosh".to_string()
    }
    fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
        x.iter()
            .zip(theta)
            .map(|(xi, ti)| 0.5 * xi * xi + log_cosh(ti * xi))
            .sum()
    }
    fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        for i in 0..self.d {
            out[i] = x[i] + theta[i] * (theta[i] * x[i]).tanh();
        }
    }
    fn gradient_theta_jacobian(&self, theta: &[f64], x: &[f64], out: &mut JacobianMatrix) {
        out.fill(0.0);
        for i in 0..self.d {
            let z = theta[i] * x[i];
            let th = z.tanh();
            out[(i, i)] = th + z * (1.0 - th * th);
        }
    }
}

/// Parametric drift family.
#[derive(Clone)]
pub enum DriftModel {
    /// `b_A(x) = A x`, θ = vect(A), p = d².
    OrnsteinUhlenbeck { d: usize },
    /// `b_θ = φ₀ + Σ θ_j φ_j`.
    GeneralLinear(LinearBasis),
    /// `b_θ = ∇V_θ`.
    LangevinGradient(Arc<dyn Potential>),
    /// `b_A^{(i)}(x) = Σ_j h(x_j, A_ij)`, θ = vect(A), p = d².
    SineQuadratic { d: usize },
}

impl fmt::Debug for DriftModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OrnsteinUhlenbeck { d } => write!(f, "OrnsteinUhlenbeck(d={d})"),
            Self::GeneralLinear(b) => write!(f, "GeneralLinear({b:?})"),
            Self::LangevinGradient(v) => write!(
                f,
                "LangevinGradient({}, d={}, p={})",
                v.name(),
                v.state_dim(),
                v.param_dim()
            ),
            Self::SineQuadratic { d } => write!(f, "SineQuadratic(d={d})"),
        }
    }
}

/// Scratch buffers reused across time steps by the likelihood loops.
#[derive(Debug, Clone)]
pub(crate) struct StepWorkspace {
    pub(crate) b: Vec<f64>,
    cache: Vec<f64>,
    /// `sin(θ_{jd+i} / x_j)` for SineQuadratic.
    sines: Vec<f64>,
    jac: JacobianMatrix,
    tmp: Vec<f64>,
}

impl DriftModel {
    pub fn ornstein_uhlenbeck(d: usize) -> Self {
        Self::OrnsteinUhlenbeck { d }
    }

    pub fn sine_quadratic(d: usize) -> Self {
        Self::SineQuadratic { d }
    }

    pub fn general_linear(basis: LinearBasis) -> Self {
        Self::GeneralLinear(basis)
    }

    pub fn langevin(potential: Arc<dyn Potential>) -> Self {
        Self::LangevinGradient(potential)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::OrnsteinUhlenbeck { .. } => "ou",
            Self::GeneralLinear(_) => "general_linear",
            Self::LangevinGradient(_) => "langevin",
            Self::SineQuadratic { .. } => "sine_quadratic",
        }
    }

    /// Short stable description, used for hashing run metadata.
    pub fn describe(&self) -> String {
        match self {
            Self::GeneralLinear(b) => format!("general_linear:{}:d={}:p={}", b.name, b.d, b.funcs.len()),
            Self::LangevinGradient(v) => format!("langevin:{}:d={}:p={}", v.name(), v.state_dim(), v.param_dim()),
            _ => format!("{}:d={}", self.family_name(), self.state_dim()),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Self::OrnsteinUhlenbeck { d } | Self::SineQuadratic { d } => *d,
            Self::GeneralLinear(b) => b.d,
            Self::LangevinGradient(v) => v.state_dim(),
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            Self::OrnsteinUhlenbeck { d } | Self::SineQuadratic { d } => d * d,
            Self::GeneralLinear(b) => b.funcs.len(),
            Self::LangevinGradient(v) => v.param_dim(),
        }
    }

    /// True when `b_θ` is affine in θ (θ-free Jacobian).
    pub fn is_linear_in_theta(&self) -> bool {
        matches!(self, Self::OrnsteinUhlenbeck { .. } | Self::GeneralLinear(_))
    }

    pub fn check_dims(&self, theta: &[f64], x: &[f64]) -> Result<(), ModelError> {
        if theta.len() != self.param_dim() {
            return Err(ModelError::DimensionMismatch {
                what: "theta",
                got: theta.len(),
                expected: self.param_dim(),
            });
        }
        if x.len() != self.state_dim() {
            return Err(ModelError::DimensionMismatch {
                what: "state",
                got: x.len(),
                expected: self.state_dim(),
            });
        }
        Ok(())
    }

    /// `b_θ(x)`.
    pub fn drift(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_dims(theta, x)?;
        let mut out = vec![0.0; self.state_dim()];
        self.drift_into(theta, x, &mut out);
        Ok(out)
    }

    /// `ḃ_θ(x)` as a `d × p` matrix.
    pub fn jacobian(&self, theta: &[f64], x: &[f64]) -> Result<JacobianMatrix, ModelError> {
        self.check_dims(theta, x)?;
        let mut out = DMatrix::zeros(self.state_dim(), self.param_dim());
        self.jacobian_into(theta, x, &mut out);
        Ok(out)
    }

    /// Unchecked drift evaluation; dimensions are the caller's responsibility.
    pub fn drift_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        match self {
            Self::OrnsteinUhlenbeck { d } => {
                let d = *d;
                out.fill(0.0);
                for (j, xj) in x.iter().enumerate() {
                    let col = &theta[j * d..(j + 1) * d];
                    for (o, a) in out.iter_mut().zip(col) {
                        *o += a * xj;
                    }
                }
            }
            Self::SineQuadratic { d } => {
                let d = *d;
                out.fill(0.0);
                for (j, xj) in x.iter().enumerate() {
                    let col = &theta[j * d..(j + 1) * d];
                    for (o, a) in out.iter_mut().zip(col) {
                        // h(x, 0) = 0 exactly
                        if *a != 0.0 {
                            *o += h_function(*xj, *a);
                        }
                    }
                }
            }
            Self::GeneralLinear(basis) => {
                match &basis.offset {
                    Some(f) => f(x, out),
                    None => out.fill(0.0),
                }
                let mut tmp = vec![0.0; basis.d];
                for (f, t) in basis.funcs.iter().zip(theta) {
                    if *t == 0.0 {
                        continue;
                    }
                    f(x, &mut tmp);
                    for (o, v) in out.iter_mut().zip(&tmp) {
                        *o += t * v;
                    }
                }
            }
            Self::LangevinGradient(v) => v.gradient(theta, x, out),
        }
    }

    /// Unchecked Jacobian evaluation into a preallocated `d × p` matrix.
    pub fn jacobian_into(&self, theta: &[f64], x: &[f64], out: &mut JacobianMatrix) {
        match self {
            Self::OrnsteinUhlenbeck { d } => {
                out.fill(0.0);
                for j in 0..*d {
                    for i in 0..*d {
                        out[(i, j * d + i)] = x[j];
                    }
                }
            }
            Self::SineQuadratic { d } => {
                out.fill(0.0);
                for j in 0..*d {
                    for i in 0..*d {
                        out[(i, j * d + i)] = h_dk(x[j], theta[j * d + i]);
                    }
                }
            }
            Self::GeneralLinear(basis) => {
                let mut tmp = vec![0.0; basis.d];
                for (c, f) in basis.funcs.iter().enumerate() {
                    f(x, &mut tmp);
                    for (r, v) in tmp.iter().enumerate() {
                        out[(r, c)] = *v;
                    }
                }
            }
            Self::LangevinGradient(v) => v.gradient_theta_jacobian(theta, x, out),
        }
    }

    /// `acc += scale · ḃ_θ(x)ᵀ v`.
    pub fn jacobian_t_mul_acc(&self, theta: &[f64], x: &[f64], v: &[f64], scale: f64, acc: &mut [f64]) {
        match self {
            Self::OrnsteinUhlenbeck { d } => {
                for (j, xj) in x.iter().enumerate() {
                    let s = scale * xj;
                    for (a, vi) in acc[j * d..(j + 1) * d].iter_mut().zip(v) {
                        *a += s * vi;
                    }
                }
            }
            Self::SineQuadratic { d } => {
                for (j, xj) in x.iter().enumerate() {
                    for i in 0..*d {
                        acc[j * d + i] += scale * v[i] * h_dk(*xj, theta[j * d + i]);
                    }
                }
            }
            _ => {
                let jac = self.jacobian(theta, x).expect("dimension-checked by caller");
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += scale * dot(jac.column(c).as_slice(), v);
                }
            }
        }
    }

    pub(crate) fn workspace(&self) -> StepWorkspace {
        let (d, p) = (self.state_dim(), self.param_dim());
        let cache = match self {
            Self::SineQuadratic { .. } => d * d,
            _ => 0,
        };
        let jac = match self {
            Self::GeneralLinear(_) | Self::LangevinGradient(_) => DMatrix::zeros(d, p),
            _ => DMatrix::zeros(0, 0),
        };
        StepWorkspace {
            b: vec![0.0; d],
            cache: vec![0.0; cache],
            sines: vec![0.0; cache],
            jac,
            tmp: vec![0.0; d],
        }
    }

    /// Evaluates `b_θ(x)` into `ws.b`; when `with_jacobian` is set, also
    /// prepares whatever [`DriftModel::jt_acc_prepared`] needs at this `x`.
    #[inline]
    pub(crate) fn prepare_step(&self, theta: &[f64], x: &[f64], ws: &mut StepWorkspace, with_jacobian: bool) {
        match self {
            Self::SineQuadratic { d } if with_jacobian => {
                let d = *d;
                ws.b.fill(0.0);
                for (j, xj) in x.iter().enumerate() {
                    let xj = *xj;
                    if xj.abs() < 1e-300 {
                        ws.cache[j * d..(j + 1) * d].fill(0.0);
                        ws.sines[j * d..(j + 1) * d].fill(0.0);
                        continue;
                    }
                    let inv = 1.0 / xj;
                    let x2 = xj * xj;
                    for i in 0..d {
                        let a = theta[j * d + i];
                        if a == 0.0 {
                            ws.cache[j * d + i] = xj;
                            ws.sines[j * d + i] = 0.0;
                            continue;
                        }
                        let (s, c) = (a * inv).sin_cos();
                        ws.b[i] += x2 * s;
                        ws.cache[j * d + i] = xj * c;
                        ws.sines[j * d + i] = s;
                    }
                }
            }
            Self::GeneralLinear(basis) if with_jacobian => {
                match &basis.offset {
                    Some(f) => f(x, &mut ws.b),
                    None => ws.b.fill(0.0),
                }
                for (c, f) in basis.funcs.iter().enumerate() {
                    f(x, &mut ws.tmp);
                    for (r, v) in ws.tmp.iter().enumerate() {
                        ws.jac[(r, c)] = *v;
                        ws.b[r] += theta[c] * v;
                    }
                }
            }
            Self::LangevinGradient(v) if with_jacobian => {
                v.gradient(theta, x, &mut ws.b);
                v.gradient_theta_jacobian(theta, x, &mut ws.jac);
            }
            _ => self.drift_into(theta, x, &mut ws.b),
        }
    }

    /// `acc += scale · ḃ_θ(x)ᵀ v` using the state cached by `prepare_step`.
    #[inline]
    pub(crate) fn jt_acc_prepared(&self, x: &[f64], ws: &StepWorkspace, v: &[f64], scale: f64, acc: &mut [f64]) {
        match self {
            Self::OrnsteinUhlenbeck { d } => {
                for (j, xj) in x.iter().enumerate() {
                    let s = scale * xj;
                    for (a, vi) in acc[j * d..(j + 1) * d].iter_mut().zip(v) {
                        *a += s * vi;
                    }
                }
            }
            Self::SineQuadratic { d } => {
                for (col_acc, col_cache) in acc.chunks_exact_mut(*d).zip(ws.cache.chunks_exact(*d)) {
                    for ((a, c), vi) in col_acc.iter_mut().zip(col_cache).zip(v) {
                        *a += scale * vi * c;
                    }
                }
            }
            Self::GeneralLinear(_) | Self::LangevinGradient(_) => {
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += scale * dot(ws.jac.column(c).as_slice(), v);
                }
            }
        }
    }

    /// `curv += dt · ḃ_θ(x)ᵀ ḃ_θ(x)` using the state cached by `prepare_step`,
    /// and `second[k] += Σ_i r_i ∂²b_i/∂θ_k²` where that is diagonal in θ.
    pub(crate) fn curvature_acc_prepared(
        &self,
        x: &[f64],
        ws: &StepWorkspace,
        r: &[f64],
        dt: f64,
        curv: &mut DMatrix<f64>,
        second: &mut [f64],
    ) {
        if let Self::SineQuadratic { d } = self {
            // ∂²h/∂k² (x, k) = −sin(k / x)
            for (k, (sk, sn)) in second.iter_mut().zip(&ws.sines).enumerate() {
                *sk -= r[k % d] * sn;
            }
        }
        match self {
            // ∂b_i/∂θ_{jd+i} is the only nonzero in row i, so the matrix
            // couples only entries within the same row of A
            Self::OrnsteinUhlenbeck { d } | Self::SineQuadratic { d } => {
                let d = *d;
                let entry = |j: usize, i: usize| match self {
                    Self::OrnsteinUhlenbeck { .. } => x[j],
                    _ => ws.cache[j * d + i],
                };
                for i in 0..d {
                    for j in 0..d {
                        let a = dt * entry(j, i);
                        if a == 0.0 {
                            continue;
                        }
                        for jj in 0..d {
                            curv[(j * d + i, jj * d + i)] += a * entry(jj, i);
                        }
                    }
                }
            }
            Self::GeneralLinear(_) | Self::LangevinGradient(_) => curv.gemm_tr(dt, &ws.jac, &ws.jac, 1.0),
        }
    }

    /// Diagnostic lower estimate of the monotonicity constant `M`:
    /// the minimum of `(b(x) − b(y))ᵀ(x − y) / ‖x − y‖²` over random pairs
    /// drawn uniformly from `[−r, r]^d`.
    pub fn monotonicity_probe(
        &self,
        theta: &[f64],
        sample_count: usize,
        box_radius: f64,
        seed: u64,
    ) -> Result<f64, ModelError> {
        let d = self.state_dim();
        self.check_dims(theta, &vec![0.0; d])?;
        if sample_count == 0 {
            return Err(ModelError::Invalid("sample_count must be at least 1".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut bx = vec![0.0; d];
        let mut by = vec![0.0; d];
        let mut best = f64::INFINITY;
        let mut drawn = 0;
        while drawn < sample_count {
            for v in x.iter_mut().chain(y.iter_mut()) {
                *v = rng.random_range(-box_radius..=box_radius);
            }
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let nn = dot(&diff, &diff);
            if nn == 0.0 {
                continue;
            }
            self.drift_into(theta, &x, &mut bx);
            self.drift_into(theta, &y, &mut by);
            let num: f64 = bx.iter().zip(&by).zip(&diff).map(|((a, b), c)| (a - b) * c).sum();
            best = best.min(num / nn);
            drawn += 1;
        }
        Ok(best)
    }
}

/// `exp(−2 V_θ(x))`, the unnormalised invariant density of a Langevin drift.
pub fn langevin_invariant_density_unnormalized(v: &dyn Potential, theta: &[f64], x: &[f64]) -> f64 {
    langevin_log_density_unnormalized(v, theta, x).exp()
}

/// Log-domain form `−2 V_θ(x)`, safe against overflow of the exponential.
pub fn langevin_log_density_unnormalized(v: &dyn Potential, theta: &[f64], x: &[f64]) -> f64 {
    -2.0 * v.value(theta, x)
}
