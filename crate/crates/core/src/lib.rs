//! Numerical Lyapunov exponents of Brownian motion in nonnegative periodic
//! potentials.
//!
//! The decay rate `alpha_V(y)` is computed along three independent routes:
//!
//! * the min-max variational formula over probability densities and
//!   divergence-free fluxes ([`gamma`]),
//! * the R-transform of the quenched free energy computed as a principal
//!   eigenvalue on the torus ([`spectral`]),
//! * Feynman-Kac Monte Carlo simulation ([`montecarlo`]).
//!
//! All fields live on a flat torus ([`torus_field`]); expectations are grid
//! averages.

pub mod corrector;
pub mod directions;
pub mod error;
pub mod functionals;
pub mod gamma;
pub mod montecarlo;
pub mod potential;
pub mod spectral;
pub mod torus_field;

pub use error::{Error, Result};
pub use potential::{averaged, realize, PotentialField, PotentialKind, PotentialSpec};
pub use torus_field::{DiffMethod, ScalarField, TorusGrid, VectorField};
