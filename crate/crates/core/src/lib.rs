//! Numerical laboratory for weighted Dirichlet eigenfunctions on dumbbell domains
//! Ω^ε = D⁻ ∪ 𝒞_ε ∪ D⁺ in ℝ^N, reduced to the axisymmetric meridian half-plane.
//!
//! The crate provides the cross-section spectral data, a graded meridian mesher, P1
//! axisymmetric operators, a sparse shift-invert eigensolver, the junction profiles Φ₁ and Φ₂,
//! Almgren-type frequency quotients with Pohozaev diagnostics, and the blow-up analysis at
//! the left junction.

pub mod blowup;
pub mod cross_section;
pub mod eigensolver;
pub mod frequency;
pub mod geometry;
pub mod harmonic_profiles;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod weight_model;

use thiserror::Error;

/// Errors surfaced by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("point or curve outside the meshed region: {0}")]
    OutsideDomain(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
