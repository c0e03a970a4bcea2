//! Outer objectives as functions of the density, with their first variations.
//!
//! Each objective returns its value and, on request, the functional derivative
//! `G` with `dF = E[G df]`. The corrector parts use the envelope identity
//! `dH(b, f) = E[|b - grad w|^2 df]` at the optimal corrector `w`.

use crate::corrector::{CgConfig, CorrectorSolver, EffectiveTensor};
use crate::error::{Error, Result};
use crate::potential::PotentialField;
use crate::torus_field::{pairwise_sum, Fourier, ScalarField};

/// Corrector fields from the previous evaluation, reused as CG starting points.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub correctors: Vec<ScalarField>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub derivative: Option<Vec<f64>>,
}

pub trait DensityObjective: Sync {
    fn evaluate(&self, f: &ScalarField, warm: &mut WarmStart, derivative: bool) -> Result<Evaluation>;
}

fn grid_mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

/// `K(f) = E[|grad f|^2 / (8 f) + V f]` and its derivative
/// `-div(grad f / (4 f)) - |grad f|^2 / (8 f^2) + V`.
pub(crate) fn k_with_derivative(
    ft: &Fourier,
    f: &ScalarField,
    v: &PotentialField,
    derivative: bool,
) -> (f64, Option<Vec<f64>>) {
    let grid = *f.grid();
    let fv = f.values();
    let spec = ft.forward_real(fv);
    let grads: Vec<Vec<f64>> = (0..grid.dim()).map(|a| ft.derivative(&spec, a)).collect();
    let mut grad_sq = vec![0.0; fv.len()];
    for g in &grads {
        for (s, x) in grad_sq.iter_mut().zip(g) {
            *s += x * x;
        }
    }
    let vv = v.field().values();
    let integrand: Vec<f64> = (0..fv.len())
        .map(|p| grad_sq[p] / (8.0 * fv[p]) + vv[p] * fv[p])
        .collect();
    let value = grid_mean(&integrand);
    if !derivative {
        return (value, None);
    }
    let mut out: Vec<f64> = (0..fv.len())
        .map(|p| vv[p] - grad_sq[p] / (8.0 * fv[p] * fv[p]))
        .collect();
    for (axis, g) in grads.iter().enumerate() {
        let q: Vec<f64> = g.iter().zip(fv).map(|(a, b)| a / (4.0 * b)).collect();
        let dq = ft.derivative(&ft.forward_real(&q), axis);
        for (o, d) in out.iter_mut().zip(&dq) {
            *o -= d;
        }
    }
    (value, Some(out))
}

/// `|b - grad w|^2` pointwise for constant `b`.
fn residual_sq(ft: &Fourier, b: &[f64], w: &ScalarField) -> Vec<f64> {
    let spec = ft.forward_real(w.values());
    let mut out = vec![0.0; w.values().len()];
    for (axis, ba) in b.iter().enumerate() {
        let d = ft.derivative(&spec, axis);
        for (o, di) in out.iter_mut().zip(&d) {
            *o += (ba - di) * (ba - di);
        }
    }
    out
}

/// `K(f)` alone.
pub fn k_functional(f: &ScalarField, v: &PotentialField) -> Result<f64> {
    check_pair(f, v)?;
    Ok(k_with_derivative(&Fourier::new(*f.grid()), f, v, false).0)
}

pub(crate) fn check_pair(f: &ScalarField, v: &PotentialField) -> Result<()> {
    if f.grid() != v.grid() {
        return Err(Error::param("density and potential live on different grids"));
    }
    if !(f.min() > 0.0) {
        return Err(Error::Domain(format!("density must be positive, min is {:.3e}", f.min())));
    }
    Ok(())
}

/// `H(b, f)` for constant `b` with its derivative.
fn h_with_derivative(
    ft: &Fourier,
    f: &ScalarField,
    b: &[f64],
    cg: &CgConfig,
    warm: &mut WarmStart,
    derivative: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if b.iter().all(|x| *x == 0.0) {
        return Ok((0.0, derivative.then(|| vec![0.0; f.values().len()])));
    }
    let solver = CorrectorSolver::new(f, cg)?;
    let sol = solver.solve_constant(b, warm.correctors.first())?;
    let d = derivative.then(|| residual_sq(ft, b, &sol.w));
    warm.correctors = vec![sol.w];
    Ok((sol.value, d))
}

/// `q = y^T A^{-1} y = sup_eta <y, eta>^2 / H(eta, f)` with derivative
/// `-|z - grad w_z|^2`, `z = A^{-1} y`.
fn flux_with_derivative(
    ft: &Fourier,
    f: &ScalarField,
    y: &[f64],
    cg: &CgConfig,
    warm: &mut WarmStart,
    derivative: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let warm_fields = (warm.correctors.len() == y.len()).then_some(warm.correctors.as_slice());
    let tensor = EffectiveTensor::compute(f, cg, warm_fields)?;
    let q = tensor.dual_flux_value(y);
    let d = derivative.then(|| {
        let z = tensor.solve(y);
        let grid = *f.grid();
        let mut wz = vec![0.0; grid.len()];
        for (zi, w) in z.iter().zip(&tensor.correctors) {
            for (a, b) in wz.iter_mut().zip(w.values()) {
                *a += zi * b;
            }
        }
        let wz = ScalarField::from_vec_unchecked(grid, wz);
        residual_sq(ft, &z, &wz).into_iter().map(|v| -v).collect()
    });
    warm.correctors = tensor.correctors;
    Ok((q, d))
}

fn combine(parts: &[(f64, &[f64])]) -> Vec<f64> {
    let n = parts[0].1.len();
    (0..n).map(|p| parts.iter().map(|(c, v)| c * v[p]).sum()).collect()
}

/// `K(f) + |lambda|^2 / 2 - H(lambda, f) / 2`.
pub struct SigmaObjective<'a> {
    pub potential: &'a PotentialField,
    pub lambda: Vec<f64>,
    pub cg: CgConfig,
    pub(crate) ft: Fourier,
}

impl<'a> SigmaObjective<'a> {
    pub fn new(potential: &'a PotentialField, lambda: &[f64], cg: CgConfig) -> Self {
        Self {
            potential,
            lambda: lambda.to_vec(),
            cg,
            ft: Fourier::new(*potential.grid()),
        }
    }
}

impl DensityObjective for SigmaObjective<'_> {
    fn evaluate(&self, f: &ScalarField, warm: &mut WarmStart, derivative: bool) -> Result<Evaluation> {
        check_pair(f, self.potential)?;
        let (k, dk) = k_with_derivative(&self.ft, f, self.potential, derivative);
        let (h, dh) = h_with_derivative(&self.ft, f, &self.lambda, &self.cg, warm, derivative)?;
        let l2: f64 = self.lambda.iter().map(|x| x * x).sum();
        Ok(Evaluation {
            value: k + 0.5 * l2 - 0.5 * h,
            derivative: dk.zip(dh).map(|(a, b)| combine(&[(1.0, &a), (-0.5, &b)])),
        })
    }
}

/// `2 K(f) - l^2 J(f)` with `J = 1 / (y^T A^{-1} y)`.
pub struct MbarObjective<'a> {
    pub potential: &'a PotentialField,
    pub y: Vec<f64>,
    pub l: f64,
    pub cg: CgConfig,
    pub(crate) ft: Fourier,
}

impl<'a> MbarObjective<'a> {
    pub fn new(potential: &'a PotentialField, y: &[f64], l: f64, cg: CgConfig) -> Self {
        Self {
            potential,
            y: y.to_vec(),
            l,
            cg,
            ft: Fourier::new(*potential.grid()),
        }
    }
}

impl DensityObjective for MbarObjective<'_> {
    fn evaluate(&self, f: &ScalarField, warm: &mut WarmStart, derivative: bool) -> Result<Evaluation> {
        check_pair(f, self.potential)?;
        let (k, dk) = k_with_derivative(&self.ft, f, self.potential, derivative);
        if self.l == 0.0 {
            return Ok(Evaluation {
                value: 2.0 * k,
                derivative: dk.map(|d| d.iter().map(|x| 2.0 * x).collect()),
            });
        }
        let (q, dq) = flux_with_derivative(&self.ft, f, &self.y, &self.cg, warm, derivative)?;
        let j = 1.0 / q;
        let l2 = self.l * self.l;
        // dJ = -dq / q^2
        Ok(Evaluation {
            value: 2.0 * k - l2 * j,
            derivative: dk.zip(dq).map(|(a, b)| combine(&[(2.0, &a), (l2 * j * j, &b)])),
        })
    }
}

/// `2 K(f) sup_eta <y, eta>^2 / H(eta, f) = 2 K(f) y^T A^{-1} y`.
pub struct InfSupObjective<'a> {
    pub potential: &'a PotentialField,
    pub y: Vec<f64>,
    pub cg: CgConfig,
    pub(crate) ft: Fourier,
}

impl<'a> InfSupObjective<'a> {
    pub fn new(potential: &'a PotentialField, y: &[f64], cg: CgConfig) -> Self {
        Self {
            potential,
            y: y.to_vec(),
            cg,
            ft: Fourier::new(*potential.grid()),
        }
    }
}

impl DensityObjective for InfSupObjective<'_> {
    fn evaluate(&self, f: &ScalarField, warm: &mut WarmStart, derivative: bool) -> Result<Evaluation> {
        check_pair(f, self.potential)?;
        let (k, dk) = k_with_derivative(&self.ft, f, self.potential, derivative);
        let (q, dq) = flux_with_derivative(&self.ft, f, &self.y, &self.cg, warm, derivative)?;
        Ok(Evaluation {
            value: 2.0 * k * q,
            derivative: dk.zip(dq).map(|(a, b)| combine(&[(2.0 * q, &a), (2.0 * k, &b)])),
        })
    }
}

/// `2 K(f) <y, eta>^2 / H(eta, f)` for one fixed direction.
pub struct DirectionObjective<'a> {
    pub potential: &'a PotentialField,
    pub y: Vec<f64>,
    pub eta: Vec<f64>,
    pub cg: CgConfig,
    pub(crate) ft: Fourier,
}

impl<'a> DirectionObjective<'a> {
    pub fn new(potential: &'a PotentialField, y: &[f64], eta: &[f64], cg: CgConfig) -> Self {
        Self {
            potential,
            y: y.to_vec(),
            eta: eta.to_vec(),
            cg,
            ft: Fourier::new(*potential.grid()),
        }
    }
}

impl DensityObjective for DirectionObjective<'_> {
    fn evaluate(&self, f: &ScalarField, warm: &mut WarmStart, derivative: bool) -> Result<Evaluation> {
        check_pair(f, self.potential)?;
        let proj: f64 = self.y.iter().zip(&self.eta).map(|(a, b)| a * b).sum();
        let p2 = proj * proj;
        let (k, dk) = k_with_derivative(&self.ft, f, self.potential, derivative);
        let (h, dh) = h_with_derivative(&self.ft, f, &self.eta, &self.cg, warm, derivative)?;
        Ok(Evaluation {
            value: 2.0 * k * p2 / h,
            derivative: dk
                .zip(dh)
                .map(|(a, b)| combine(&[(2.0 * p2 / h, &a), (-2.0 * k * p2 / (h * h), &b)])),
        })
    }
}
