//! Local surrogate explanations for black-box models.
//!
//! The crate implements LIME and its weight-free reformulations (GLIME with
//! Binomial, Gaussian, Laplace and uniform perturbations), exact and sampled
//! KernelSHAP, and a SmoothGrad estimator, together with infinite-sample
//! oracles for linear models, stability and local-fidelity metrics, and a
//! seeded experiment harness.

pub mod error;
pub mod explain;
pub mod feature_space;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
