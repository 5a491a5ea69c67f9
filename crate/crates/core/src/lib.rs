//! Reliability-based topology optimization (RBTO) of plane-stress continua
//! whose Young's modulus is a spatially correlated random field.
//!
//! The pipeline alternates a deterministic SIMP/MMA topology optimization
//! with an inverse (performance-measure) reliability analysis that runs on a
//! Hermite polynomial-chaos surrogate of the constrained displacement. The
//! random field is reduced to a handful of standard normal variables by a
//! discrete Karhunen–Loève expansion, and final designs can be checked by
//! Latin-hypercube Monte Carlo against the full finite-element model.
//!
//! Module map:
//!
//! - [`fea`]: Q4 plane-stress analysis, profile Cholesky solve, adjoint sensitivities.
//! - [`random_field`]: separable exponential covariance, KL basis, modulus transform.
//! - [`chaos`]: Hermite basis, collocation points, least-squares surrogate.
//! - [`topopt`]: density filter, method of moving asymptotes, deterministic driver.
//! - [`reliability`]: hybrid-mean-value MPP search on the β-sphere.
//! - [`sora`]: the sequential optimization / reliability assessment loop.
//! - [`verification`]: Latin-hypercube Monte Carlo and report comparison.
//! - [`presets`]: MBB half-beam and L-shaped beam benchmark problems.

pub mod chaos;
pub mod error;
pub mod fea;
pub mod presets;
pub mod random_field;
pub mod reliability;
pub mod sora;
pub mod topopt;
pub mod verification;

pub use error::{Error, Result};

/// Lower bound on element densities; passive void elements are pinned here.
pub const RHO_MIN: f64 = 1e-3;
