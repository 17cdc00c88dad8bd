//! Special functions, adaptive quadrature, and combinatorial enumeration.

pub mod combinatorics;
pub mod quadrature;
pub mod special;

pub use combinatorics::{
    binomial, composition_count, compositions, factorial, multinomial, partition_count,
    partition_multiplicities, Composition, PartitionMultiplicity,
};
pub use quadrature::{integrate, integrate_semi_infinite, integrate_semi_infinite_scaled};
pub use special::{erf, erfc, lambert_w, ln_factorial, log_poisson_pmf, WBranch};

/// Tolerance and truncation policy for the adaptive quadrature routines.
///
/// All semi-infinite integrals in the model (distance PDFs, interference
/// moments, Laplace transforms) are smooth with Gaussian-like tails; the
/// `tail_cutoff_mass` bounds the fraction of integrand mass that truncation
/// is allowed to discard.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: u32,
    pub tail_cutoff_mass: f64,
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-9,
            max_subdivisions: 10_000,
            tail_cutoff_mass: 1e-9,
        }
    }
}

impl IntegrationSpec {
    /// Panics if the tolerances are not positive or the tail allowance is too
    /// loose to trust any of the tail integrals in the model.
    pub fn validate(&self) {
        assert!(self.abs_tol > 0.0, "abs_tol must be positive");
        assert!(self.rel_tol > 0.0, "rel_tol must be positive");
        assert!(self.max_subdivisions > 0);
        assert!(
            self.tail_cutoff_mass < 1e-8,
            "tail_cutoff_mass must stay below 1e-8"
        );
    }
}
