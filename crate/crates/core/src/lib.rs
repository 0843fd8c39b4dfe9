//! Superreplication pricing under quadratic-variation uncertainty.
//!
//! The crate prices path-dependent European claims when the quadratic
//! variation of the underlying is only known to lie in a band
//! `dμ̲ ≤ d⟨B⟩ ≤ dμ̄`, checks the resulting superhedge pathwise on simulated
//! martingale paths, and compares the price with Monte Carlo lower bounds
//! taken over a battery of admissible measures.
//!
//! - [`model`]: bands, payoff expressions, path evaluation.
//! - [`lattice`]: trinomial dynamic programming with bang-bang variance control.
//! - [`simulate`]: seeded path ensembles, realized quadratic variation, discrete stochastic integrals.
//! - [`analysis`]: superhedge audits, duality gaps, capacity estimates.
//! - [`cli`]: config parsing and report generation for the `qvband` binary.

pub mod analysis;
pub mod cli;
mod error;
pub mod lattice;
pub mod model;
pub(crate) mod par;
pub mod simulate;

pub use error::{Error, Result};
