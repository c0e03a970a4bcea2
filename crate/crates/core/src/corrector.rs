//! The two inner quadratic problems of the variational formula.
//!
//! * the weighted cell problem `H(b, f) = inf_w E[|b - grad w|^2 f]` over
//!   mean-zero fields `w`, solved from `-div(f grad w) = -div(f b)`;
//! * the flux problem `inf E[|phi|^2 / f]` over divergence-free `phi` with
//!   mean `y`. In 2D `phi = y + (d_2 s, -d_1 s)` for a stream function `s`,
//!   which turns it into the same weighted Laplacian with weight `1/f`.
//!
//! Both are solved by conjugate gradients on Fourier coefficients. The mean
//! and the Nyquist bins, where every odd derivative symbol vanishes, are
//! projected out of every iterate and residual.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::directions::{self, SweepConfig, SweepOptimum};
use crate::error::{Error, Result};
use crate::torus_field::{
    divergence, gradient, mean, rotated_gradient, DiffMethod, Fourier, ScalarField, TorusGrid,
    VectorField,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    /// Diagonal of the operator in the Fourier basis, `mean(weight) |k|^2`.
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgConfig {
    /// Relative residual target.
    pub tol: f64,
    /// Iteration cap; `None` means `10 n^d`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl CgConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Minimizer of the weighted cell problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSolution {
    /// Mean-zero corrector.
    pub w: ScalarField,
    /// `E[|b - grad w|^2 f]`.
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Objective after each CG iteration, when requested.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<f64>,
}

/// Minimizer of the flux problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSolution {
    pub phi: VectorField,
    /// `E[|phi|^2 / f]`.
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub max_divergence: f64,
}

/// `-div(weight grad .)` restricted to mean-zero fields, in Fourier space.
pub(crate) struct WeightedLaplacian {
    ft: Fourier,
    weight: Vec<f64>,
    /// Bins carrying no derivative information (mean and Nyquist corners).
    null: Vec<bool>,
    precond: Vec<f64>,
}

impl WeightedLaplacian {
    pub(crate) fn new(weight: &ScalarField, preconditioner: Preconditioner) -> Self {
        let grid = *weight.grid();
        let ft = Fourier::new(grid);
        let wbar = mean(weight);
        let mut null = vec![false; grid.len()];
        let mut precond = vec![1.0; grid.len()];
        for idx in 0..grid.len() {
            let k2: f64 = (0..grid.dim()).map(|a| ft.deriv_symbol(a)[idx].powi(2)).sum();
            if k2 == 0.0 {
                null[idx] = true;
                precond[idx] = 0.0;
            } else if preconditioner == Preconditioner::Jacobi {
                precond[idx] = 1.0 / (wbar * k2);
            }
        }
        Self {
            ft,
            weight: weight.values().to_vec(),
            null,
            precond,
        }
    }

    fn grid(&self) -> &TorusGrid {
        self.ft.grid()
    }

    fn project(&self, v: &mut [Complex64]) {
        for (z, &n) in v.iter_mut().zip(&self.null) {
            if n {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let dim = self.grid().dim();
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        for axis in 0..dim {
            let sym = self.ft.deriv_symbol(axis);
            let mut d = self.ft.derivative(x, axis);
            for (v, w) in d.iter_mut().zip(&self.weight) {
                *v *= w;
            }
            let dh = self.ft.forward_real(&d);
            // -i k * (weight * d_axis x)^
            for ((o, z), &k) in out.iter_mut().zip(&dh).zip(sym) {
                *o += Complex64::new(k * z.im, -k * z.re);
            }
        }
        self.project(&mut out);
        out
    }

    /// Spectrum of `-div(weight * field)`.
    fn divergence_rhs(&self, field: &[Vec<f64>]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.weight.len()];
        for (axis, comp) in field.iter().enumerate() {
            let prod: Vec<f64> = comp.iter().zip(&self.weight).map(|(a, w)| a * w).collect();
            let ph = self.ft.forward_real(&prod);
            let sym = self.ft.deriv_symbol(axis);
            for ((o, z), &k) in out.iter_mut().zip(&ph).zip(sym) {
                *o += Complex64::new(k * z.im, -k * z.re);
            }
        }
        self.project(&mut out);
        out
    }

    /// Solves `A x = rhs` by (preconditioned) conjugate gradients.
    ///
    /// `offset` is the objective at `x = 0`; with it the energy trace records
    /// the actual objective `offset + <x, A x> - 2 <x, rhs>` (grid averages).
    fn solve(
        &self,
        rhs: &[Complex64],
        warm: Option<Vec<Complex64>>,
        cfg: &CgConfig,
        context: &str,
        trace_offset: Option<f64>,
    ) -> Result<(Vec<Complex64>, usize, f64, Vec<f64>)> {
        let len = rhs.len();
        let scale = 1.0 / (len as f64 * len as f64);
        let dot = |a: &[Complex64], b: &[Complex64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>()
        };
        let rhs_norm = dot(rhs, rhs).sqrt();
        let max_iter = cfg.max_iter.unwrap_or(10 * len);
        let mut trace = Vec::new();
        if rhs_norm == 0.0 {
            return Ok((vec![Complex64::new(0.0, 0.0); len], 0, 0.0, trace));
        }
        let mut x = match warm {
            Some(mut w) if w.len() == len => {
                self.project(&mut w);
                w
            }
            _ => vec![Complex64::new(0.0, 0.0); len],
        };
        let ax = self.apply(&x);
        let mut r: Vec<Complex64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        self.project(&mut r);
        let mut z: Vec<Complex64> = r.iter().zip(&self.precond).map(|(v, p)| v * p).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut res = dot(&r, &r).sqrt() / rhs_norm;
        let record = |x: &[Complex64], r: &[Complex64], trace: &mut Vec<f64>| {
            if let Some(off) = trace_offset {
                let e: f64 = x
                    .iter()
                    .zip(rhs.iter().zip(r))
                    .map(|(xi, (bi, ri))| xi.re * (bi.re + ri.re) + xi.im * (bi.im + ri.im))
                    .sum();
                trace.push(off - e * scale);
            }
        };
        record(&x, &r, &mut trace);
        let mut it = 0;
        while res > cfg.tol {
            if it >= max_iter {
                let best = self.ft.inverse_real(&x);
                return Err(Error::Convergence {
                    context: context.to_string(),
                    iterations: it,
                    residual: res,
                    best: Some(best),
                });
            }
            let ap = self.apply(&p);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(Error::Numerical(format!(
                    "{context}: operator lost positivity (p.Ap = {pap:.3e})"
                )));
            }
            let alpha = rz / pap;
            for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
                *xi += alpha * pi;
                *ri -= alpha * api;
            }
            self.project(&mut r);
            for ((zi, ri), pc) in z.iter_mut().zip(&r).zip(&self.precond) {
                *zi = ri * pc;
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
            res = dot(&r, &r).sqrt() / rhs_norm;
            it += 1;
            record(&x, &r, &mut trace);
        }
        Ok((x, it, res, trace))
    }
}

fn check_density(f: &ScalarField) -> Result<()> {
    let m = f.min();
    if !(m > 0.0) {
        return Err(Error::Domain(format!("density must be positive, min is {m:.3e}")));
    }
    Ok(())
}

/// Reusable cell-problem solver for one density `f`.
pub struct CorrectorSolver {
    f: ScalarField,
    op: WeightedLaplacian,
    cfg: CgConfig,
}

impl CorrectorSolver {
    pub fn new(f: &ScalarField, cfg: &CgConfig) -> Result<Self> {
        check_density(f)?;
        if !(cfg.tol > 0.0) {
            return Err(Error::param("CG tolerance must be positive"));
        }
        Ok(Self {
            f: f.clone(),
            op: WeightedLaplacian::new(f, cfg.preconditioner),
            cfg: *cfg,
        })
    }

    pub fn density(&self) -> &ScalarField {
        &self.f
    }

    pub fn solve(&self, b: &VectorField, warm: Option<&ScalarField>) -> Result<CorrectorSolution> {
        self.solve_inner(b, warm, false)
    }

    /// Like [`solve`](Self::solve) and records the objective after every iteration.
    pub fn solve_traced(&self, b: &VectorField) -> Result<CorrectorSolution> {
        self.solve_inner(b, None, true)
    }

    /// Constant `b`.
    pub fn solve_constant(&self, b: &[f64], warm: Option<&ScalarField>) -> Result<CorrectorSolution> {
        self.solve(&VectorField::constant(*self.f.grid(), b), warm)
    }

    fn solve_inner(
        &self,
        b: &VectorField,
        warm: Option<&ScalarField>,
        traced: bool,
    ) -> Result<CorrectorSolution> {
        let grid = *self.f.grid();
        if *b.grid() != grid {
            return Err(Error::param("b and f live on different grids"));
        }
        let comps: Vec<Vec<f64>> = b.components().iter().map(|c| c.values().to_vec()).collect();
        let rhs = self.op.divergence_rhs(&comps);
        let offset = traced.then(|| mean(&b.norm_sq().zip_map(&self.f, |a, f| a * f)));
        let warm = warm.map(|w| self.op.ft.forward_real(w.values()));
        let (x, iterations, residual, trace) =
            self.op.solve(&rhs, warm, &self.cfg, "corrector", offset)?;
        let w = ScalarField::from_vec_unchecked(grid, self.op.ft.inverse_real(&x));
        let mut acc = vec![0.0; grid.len()];
        for axis in 0..grid.dim() {
            let d = self.op.ft.derivative(&x, axis);
            let ba = b.component(axis).values();
            for ((a, di), bi) in acc.iter_mut().zip(&d).zip(ba) {
                *a += (bi - di) * (bi - di);
            }
        }
        let value = mean(&ScalarField::from_vec_unchecked(
            grid,
            acc.iter().zip(self.f.values()).map(|(a, f)| a * f).collect(),
        ));
        Ok(CorrectorSolution {
            w,
            value,
            iterations,
            residual,
            trace,
        })
    }
}

/// Minimizes `E[|b - grad w|^2 f]` over mean-zero `w`.
pub fn solve_corrector(f: &ScalarField, b: &VectorField, cfg: &CgConfig) -> Result<CorrectorSolution> {
    CorrectorSolver::new(f, cfg)?.solve(b, None)
}

fn check_unit(eta: &[f64], dim: usize) -> Result<()> {
    let norm: f64 = eta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if eta.len() != dim || (norm - 1.0).abs() > 1e-10 {
        return Err(Error::param(format!("{eta:?} is not a unit vector in R^{dim}")));
    }
    Ok(())
}

fn check_normalized(f: &ScalarField) -> Result<()> {
    check_density(f)?;
    let m = mean(f);
    if (m - 1.0).abs() > 1e-8 {
        return Err(Error::Domain(format!("density must have mean 1, has {m}")));
    }
    Ok(())
}

/// `H(eta, f)` for a unit vector `eta` and a probability density `f`.
pub fn h_value(eta: &[f64], f: &ScalarField, cfg: &CgConfig) -> Result<f64> {
    check_unit(eta, f.grid().dim())?;
    check_normalized(f)?;
    Ok(CorrectorSolver::new(f, cfg)?.solve_constant(eta, None)?.value)
}

/// The homogenized matrix `A_ij = E[(e_i - grad w_i) . (e_j - grad w_j) f]`.
///
/// `H(b, f) = b^T A b` for constant `b`, so one corrector per axis gives `H`
/// in every direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    pub dim: usize,
    pub a: [[f64; 2]; 2],
    pub correctors: Vec<ScalarField>,
    pub iterations: usize,
}

impl EffectiveTensor {
    pub fn compute(f: &ScalarField, cfg: &CgConfig, warm: Option<&[ScalarField]>) -> Result<Self> {
        let solver = CorrectorSolver::new(f, cfg)?;
        Self::with_solver(&solver, warm)
    }

    pub(crate) fn with_solver(solver: &CorrectorSolver, warm: Option<&[ScalarField]>) -> Result<Self> {
        let grid = *solver.density().grid();
        let dim = grid.dim();
        let mut correctors = Vec::with_capacity(dim);
        let mut iterations = 0;
        for axis in 0..dim {
            let mut e = [0.0; 2];
            e[axis] = 1.0;
            let sol = solver.solve_constant(&e[..dim], warm.and_then(|w| w.get(axis)))?;
            iterations += sol.iterations;
            correctors.push(sol.w);
        }
        let ft = &solver.op.ft;
        let grads: Vec<Vec<Vec<f64>>> = correctors
            .iter()
            .map(|w| {
                let spec = ft.forward_real(w.values());
                (0..dim).map(|a| ft.derivative(&spec, a)).collect()
            })
            .collect();
        let f = solver.density().values();
        let mut a = [[0.0; 2]; 2];
        for i in 0..dim {
            for j in i..dim {
                let mut s = vec![0.0; grid.len()];
                for (p, sp) in s.iter_mut().enumerate() {
                    let mut dotp = 0.0;
                    for c in 0..dim {
                        let ei = if c == i { 1.0 } else { 0.0 };
                        let ej = if c == j { 1.0 } else { 0.0 };
                        dotp += (ei - grads[i][c][p]) * (ej - grads[j][c][p]);
                    }
                    *sp = dotp * f[p];
                }
                let v = crate::torus_field::pairwise_sum(&s) / grid.len() as f64;
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        Ok(Self {
            dim,
            a,
            correctors,
            iterations,
        })
    }

    /// `b^T A b`.
    pub fn quadratic(&self, b: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| b[i] * self.a[i][j] * b[j]).sum::<f64>())
            .sum()
    }

    /// `A^{-1} y`.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        if self.dim == 1 {
            vec![y[0] / self.a[0][0]]
        } else {
            let [[a, b], [c, d]] = self.a;
            let det = a * d - b * c;
            vec![(d * y[0] - b * y[1]) / det, (a * y[1] - c * y[0]) / det]
        }
    }

    /// `sup_eta <y, eta>^2 / H(eta, f) = y^T A^{-1} y`.
    pub fn dual_flux_value(&self, y: &[f64]) -> f64 {
        let z = self.solve(y);
        z.iter().zip(y).map(|(a, b)| a * b).sum()
    }
}

/// `sup_eta <y, eta>^2 / H(eta, f)` by a direction sweep, skipping
/// directions with `<y, eta>^2 < 1e-12`. `h` evaluates `H(eta, f)`.
pub fn dual_flux_sweep<H>(y: &[f64], dim: usize, sweep: &SweepConfig, mut h: H) -> Result<SweepOptimum>
where
    H: FnMut(&[f64]) -> Result<f64>,
{
    directions::maximize(dim, sweep, |eta| {
        let proj: f64 = eta.iter().zip(y).map(|(a, b)| a * b).sum();
        if proj * proj < 1e-12 {
            return Ok(None);
        }
        Ok(Some(proj * proj / h(eta)?))
    })
}

/// Minimizes `E[|phi|^2 / f]` over divergence-free `phi` with mean `y`.
pub fn min_flux(f: &ScalarField, y: &[f64], cfg: &CgConfig) -> Result<FluxSolution> {
    check_normalized(f)?;
    let grid = *f.grid();
    if y.len() != grid.dim() {
        return Err(Error::param("flux mean has the wrong dimension"));
    }
    if grid.dim() == 1 {
        let phi = VectorField::constant(grid, y);
        let inv_mean = mean(&f.map(|v| 1.0 / v));
        return Ok(FluxSolution {
            phi,
            value: y[0] * y[0] * inv_mean,
            iterations: 0,
            residual: 0.0,
            max_divergence: 0.0,
        });
    }
    let inv_f = f.map(|v| 1.0 / v);
    let op = WeightedLaplacian::new(&inv_f, cfg.preconditioner);
    // -rot^*(y / f) with rot^* v = d_1 v_2 - d_2 v_1; as a divergence:
    // rot^* v = div(v_2, -v_1), so the rhs is -div(inv_f * (y_2, -y_1)).
    let rhs = op.divergence_rhs(&[vec![y[1]; grid.len()], vec![-y[0]; grid.len()]]);
    let (x, iterations, residual, _) = op.solve(&rhs, None, cfg, "stream function", None)?;
    let stream = ScalarField::from_vec_unchecked(grid, op.ft.inverse_real(&x));
    let rot = rotated_gradient(&stream, DiffMethod::Spectral)?;
    let phi = VectorField::new(vec![
        rot.component(0).map(|v| v + y[0]),
        rot.component(1).map(|v| v + y[1]),
    ])?;
    let value = mean(&phi.norm_sq().zip_map(&inv_f, |a, b| a * b));
    let max_divergence = divergence(&phi, DiffMethod::Spectral)
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(FluxSolution {
        phi,
        value,
        iterations,
        residual,
        max_divergence,
    })
}

/// `E[|b - grad w|^2 f]` evaluated for a given `w` (no minimization).
pub fn cell_energy(f: &ScalarField, b: &[f64], w: &ScalarField) -> f64 {
    let g = gradient(w, DiffMethod::Spectral);
    let grid = *f.grid();
    let vals: Vec<f64> = (0..grid.len())
        .map(|p| {
            let s: f64 = (0..grid.dim())
                .map(|a| (b[a] - g.component(a).values()[p]).powi(2))
                .sum();
            s * f.values()[p]
        })
        .collect();
    mean(&ScalarField::from_vec_unchecked(grid, vals))
}
