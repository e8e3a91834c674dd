//! Lie-point symmetries and exact pathwise integration for scalar Itô SDEs
//!
//! `dx = f(x,t) dt + σ(x) dw` with constant noise `σ = s` or simple noise
//! `σ = s·x^k`.
//!
//! The pipeline is: describe a problem ([`model::SdeProblem`]), reduce it to
//! unit-noise standard form ([`transforms`]), classify the transformed drift
//! into family A, B or C and build the admitted symmetry ([`classifier`]),
//! check it against the determining equations ([`determining`]), then
//! integrate exactly on a shared Wiener path and compare against Euler-Maruyama
//! or Milstein ([`integrate`]).

pub mod classifier;
pub mod determining;
mod error;
pub mod exprlang;
pub mod integrate;
pub mod model;
pub mod numeric;
pub mod transforms;

pub use error::{Error, Result};
pub use exprlang::{Bindings, Expr};
pub use model::{
    Case, CaseParams, ClassificationResult, Coefficients, Detected, Domain, DriftSpec, ErrorReport,
    Method, NoiseSpec, Phi, SdeProblem, SolutionPath, Symmetry, TimeFunction, WienerPath,
};
