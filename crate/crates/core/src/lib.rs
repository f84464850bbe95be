//! Hole-size certificates for open piecewise expanding interval maps.
//!
//! Given a map `T` of `[0, 1]` and an escape tolerance `ell`, the pipeline
//! discretizes the transfer operator with Ulam's method, bounds its resolvent
//! from computed spectral data, feeds the bound through the Keller-Liverani
//! perturbation constants, and returns a hole size `Γ ε_com` such that every
//! hole of at most that measure leaves an open system with an absolutely
//! continuous conditionally invariant measure whose escape rate is below
//! `-ln(1 - ell)`.
//!
//! Modules, bottom-up:
//!
//! * [`maps`]: branch-wise description of `T` and its Lasota-Yorke pair.
//! * [`ulam`]: closed and open Ulam matrices, matrix files.
//! * [`spectral`]: eigenvalues, invariant density, `‖Qⁿ‖₁`, Neumann and `H*` bounds.
//! * [`kl`]: Lasota-Yorke and Keller-Liverani constant chains.
//! * [`certify`]: the refinement / separation driver and its certificate.
//! * [`escape`]: escape rates of concrete holes and shrinking-hole ratios.
//! * [`cache`], [`reproduce`]: on-disk reuse and the published-table runs.

pub mod cache;
pub mod certify;
pub mod error;
pub mod escape;
pub mod kl;
pub mod maps;
pub mod rational;
pub mod reproduce;
pub mod sparse;
pub mod spectral;
pub mod ulam;

pub use error::{Error, Result};
pub use maps::PiecewiseMap;
pub use rational::Rational;
pub use ulam::{Hole, UlamMatrix, UlamPartition};
