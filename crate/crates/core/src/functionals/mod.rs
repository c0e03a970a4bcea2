//! The density functionals `K`, `J`, the root function `mbar(l)` and the
//! variational value `sigma(lambda)`, with the parametrized densities over
//! which the outer infimum is taken.
//!
//! Densities are written `f = exp(g) / E[exp(g)]` with `g` a truncated real
//! Fourier series, so positivity and normalization hold by construction.

mod basis;
mod objective;
mod optimize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use basis::{density, DensityParams, LOG_DENSITY_BOUND};
pub use objective::{
    k_functional, DensityObjective, DirectionObjective, Evaluation, InfSupObjective, MbarObjective,
    SigmaObjective, WarmStart,
};
pub use optimize::{minimize, starting_points, Descent, GradientMode, OptConfig, OptResult, StopReason};

use crate::corrector::{dual_flux_sweep, CgConfig, CorrectorSolver, EffectiveTensor};
use crate::directions::{SweepConfig, SweepOptimum};
use crate::error::{Error, Result};
use crate::potential::PotentialField;
use crate::torus_field::ScalarField;

fn check_y(y: &[f64], dim: usize) -> Result<f64> {
    if y.len() != dim {
        return Err(Error::param(format!("y has {} components, grid has dimension {dim}", y.len())));
    }
    let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::param("y must be a nonzero finite vector"));
    }
    Ok(n)
}

/// `J(f) = inf_eta H(eta, f) / <y, eta>^2`, evaluated in closed form as
/// `1 / (y^T A^{-1} y)` from the homogenized matrix.
pub fn j_functional(f: &ScalarField, y: &[f64], cg: &CgConfig) -> Result<f64> {
    check_y(y, f.grid().dim())?;
    let t = EffectiveTensor::compute(f, cg, None)?;
    Ok(1.0 / t.dual_flux_value(y))
}

/// `J(f)` by sweeping directions, one corrector solve per direction.
pub fn j_sweep(f: &ScalarField, y: &[f64], cg: &CgConfig, sweep: &SweepConfig) -> Result<SweepOptimum> {
    check_y(y, f.grid().dim())?;
    let solver = CorrectorSolver::new(f, cg)?;
    let mut best = dual_flux_sweep(y, f.grid().dim(), sweep, |eta| Ok(solver.solve_constant(eta, None)?.value))?;
    best.value = 1.0 / best.value;
    Ok(best)
}

/// `inf_f {2 K(f) - l^2 J(f)}` over the parametrized densities.
pub fn mbar(v: &PotentialField, y: &[f64], l: f64, cfg: &OptConfig) -> Result<OptResult> {
    check_y(y, v.grid().dim())?;
    if !(l >= 0.0 && l.is_finite()) {
        return Err(Error::param("l must be finite and nonnegative"));
    }
    let obj = MbarObjective::new(v, y, l, cfg.cg);
    let starts = starting_points(v.grid(), cfg, &[])?;
    minimize(&obj, v.grid(), cfg, &starts, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Variational,
    Spectral,
}

/// A value of `sigma(lambda)` and how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaValue {
    pub lambda: Vec<f64>,
    pub value: f64,
    pub route: Route,
    pub diagnostics: BTreeMap<String, f64>,
}

/// `sigma(lambda) = inf_f {K(f) + |lambda|^2 / 2 - H(lambda, f) / 2}`.
pub fn sigma_variational(v: &PotentialField, lambda: &[f64], cfg: &OptConfig) -> Result<SigmaValue> {
    let dim = v.grid().dim();
    if lambda.len() != dim || lambda.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("lambda must be a finite vector of the grid dimension"));
    }
    let obj = SigmaObjective::new(v, lambda, cfg.cg);
    let starts = starting_points(v.grid(), cfg, &[])?;
    let r = minimize(&obj, v.grid(), cfg, &starts, None)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("iterations".into(), r.iterations as f64);
    diagnostics.insert("evaluations".into(), r.evaluations as f64);
    diagnostics.insert("grad_norm".into(), r.grad_norm);
    diagnostics.insert("start".into(), r.start as f64);
    diagnostics.insert("converged".into(), if r.converged() { 1.0 } else { 0.0 });
    Ok(SigmaValue {
        lambda: lambda.to_vec(),
        value: r.value,
        route: Route::Variational,
        diagnostics,
    })
}
