//! Fixtures shared by the benchmarks.

use lyapvar_core::{realize, PotentialField, PotentialSpec, ScalarField, TorusGrid};

pub fn cosine(dim: usize, n: usize) -> PotentialField {
    let grid = TorusGrid::new(dim, n, &vec![1.0; dim]).expect("valid grid");
    realize(&PotentialSpec::cosine(1.0), &grid).expect("valid potential")
}

/// `1 + 0.4 sin(2 pi (x_0 + x_1))`, a density with off-diagonal coupling.
pub fn tilted_density(n: usize) -> ScalarField {
    let grid = TorusGrid::square(n, 1.0).expect("valid grid");
    ScalarField::from_fn(grid, |x| 1.0 + 0.4 * (2.0 * std::f64::consts::PI * (x[0] + x[1])).sin())
}
