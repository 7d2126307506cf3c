//! Sparse estimation of the drift of a multivariate ergodic diffusion
//! `dX_t = −b_θ(X_t) dt + dW_t` from a discretely sampled path.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod estimators;
pub mod experiments;
pub mod likelihood;
pub mod model;
pub mod numeric;
pub mod report;
pub mod sim;
pub mod theory;
