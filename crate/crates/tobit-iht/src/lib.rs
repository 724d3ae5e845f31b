//! Sparse estimation for left-censored (Tobit) regression by iterative hard
//! thresholding, in a convex working parameterization.
//!
//! The observed response is `y = max(y*, c0)` for a latent linear model
//! `y* = x'β + ε`, `ε ~ N(0, σ²)`. In the working coordinates
//! `θ = (δ, γ) = (β/σ, 1/σ)` the negative log-likelihood is convex and
//! smooth, so projected gradient descent with a hard-thresholding projection
//! recovers sparse coefficients at scale. The crate provides:
//!
//! - [`model`]: the dataset container and likelihood kernel (value, gradient,
//!   Hessian, prediction) in the working parameterization;
//! - [`special`]: the numerically hardened Gaussian tail kernels the
//!   likelihood needs (log CDF, inverse Mills ratio and its derivative);
//! - [`sparsify`]: the hard-thresholding projection onto s-sparse vectors
//!   with a scale floor on γ;
//! - [`solver`]: the centralized iterative-hard-thresholding solver with
//!   automatic step sizing, backtracking, and per-iteration traces;
//! - [`dist`]: the communication-efficient distributed variant, exchanging
//!   only gradient vectors between machines each outer round;
//! - [`datagen`]: fully seeded synthetic data generation;
//! - [`eval`]: metrics, cross-validation over sparsity, and the replication
//!   harnesses used by the acceptance experiments.
//!
//! Determinism is a design requirement throughout: fixed reduction trees,
//! seeded generators with a recorded algorithm identifier, and canonical row
//! ordering make every result — including floating-point bits — reproducible
//! for a given configuration.

pub mod datagen;
pub mod dist;
pub mod error;
pub mod eval;
pub mod model;
pub mod solver;
pub mod sparsify;
pub mod special;

mod reduce;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
