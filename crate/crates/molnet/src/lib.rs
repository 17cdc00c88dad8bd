//! Analytical engine and Monte Carlo simulator for clustered molecular
//! nanonetworks.
//!
//! Nanomachines are grouped into clusters around fusion centers (FCs): cluster
//! centers form a 3D Poisson point process and members are displaced by
//! isotropic Gaussian offsets (a Thomas cluster process). Information
//! molecules diffuse to the FC at the origin, which counts arrivals over a
//! time slot and decodes the transmitted molecule count with an
//! interference-aware threshold detector.
//!
//! The crate computes, in closed or integral form: member-to-origin distance
//! distributions ([`geometry`]), the diffusion observation probability
//! ([`channel`]), expected interference and its Laplace transform with
//! derivatives ([`interference`]), detection thresholds ([`detector`]), and
//! exact / upper-bound / ON-OFF-keying error probabilities ([`analysis`]).
//! Every analytical quantity can be cross-checked against a spatial Monte
//! Carlo simulation ([`simulator`]). Units are micrometers and seconds
//! throughout.

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod detector;
pub mod geometry;
pub mod interference;
pub mod numerics;
pub mod simulator;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Adaptive quadrature could not meet the requested tolerances.
    #[error("quadrature did not converge: partial value {partial:e}, error estimate {estimate:e}")]
    QuadratureNoConvergence { partial: f64, estimate: f64 },
    /// A combinatorial expansion would exceed the configured term budget.
    #[error("derivative order {order} needs ~{terms:e} terms (budget {budget:e}); use the upper bound instead")]
    BudgetExceeded { order: usize, terms: f64, budget: f64 },
    /// A closed form was requested outside the parameter regime where it holds.
    #[error("regime violation: {0}")]
    Regime(String),
    /// Rejection sampling gave up because the acceptance rate is pathological.
    #[error("rejection sampling exceeded {cap} attempts")]
    RejectionCap { cap: u64 },
    /// A computed value failed a sanity check (e.g. probability far outside [0,1]).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Configuration file or CLI argument problem.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
