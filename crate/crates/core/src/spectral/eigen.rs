//! Principal eigenvalue of `A = Delta / 2 + lambda . grad - V` on the torus.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::PotentialField;
use crate::torus_field::{pairwise_sum, Fourier, ScalarField};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigMethod {
    /// Power iteration on the explicit Euler propagator `u + dt A u`.
    Propagator,
    /// Inverse iteration with a fixed shift above the spectrum, each solve by
    /// FFT-preconditioned GMRES.
    #[default]
    ShiftInvert,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigConfig {
    pub method: EigMethod,
    /// Target for `|A u - Lambda u| / |u|`.
    pub tol: f64,
    /// Propagator steps between convergence checks.
    pub window: usize,
    pub max_steps: usize,
    pub max_outer: usize,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl Default for EigConfig {
    fn default() -> Self {
        Self {
            method: EigMethod::ShiftInvert,
            tol: 1e-10,
            window: 50,
            max_steps: 20_000_000,
            max_outer: 500,
            gmres_tol: 1e-11,
            gmres_restart: 40,
            gmres_max_iter: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigResult {
    pub lambda_drift: Vec<f64>,
    /// `Lambda(lambda)`.
    pub principal_value: f64,
    /// Positive eigenfunction with mean 1.
    pub eigenfield: ScalarField,
    pub iterations: usize,
    pub residual: f64,
}

/// Matrix-free `A` in Fourier space.
pub(crate) struct Generator {
    ft: Fourier,
    /// Symbol of `Delta / 2 + lambda . grad`.
    symbol: Vec<Complex64>,
    v: Vec<f64>,
}

impl Generator {
    pub(crate) fn new(v: &PotentialField, lambda: &[f64]) -> Self {
        let grid = *v.grid();
        let ft = Fourier::new(grid);
        let symbol = (0..grid.len())
            .map(|idx| {
                let drift: f64 = (0..grid.dim()).map(|a| lambda[a] * ft.deriv_symbol(a)[idx]).sum();
                Complex64::new(0.5 * ft.laplace_symbol()[idx], drift)
            })
            .collect();
        Self {
            ft,
            symbol,
            v: v.field().values().to_vec(),
        }
    }

    pub(crate) fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut s = self.ft.forward_real(u);
        for (z, k) in s.iter_mut().zip(&self.symbol) {
            *z *= k;
        }
        let mut out = self.ft.inverse_real(&s);
        for ((o, vi), ui) in out.iter_mut().zip(&self.v).zip(u) {
            *o -= vi * ui;
        }
        out
    }

    /// `-E[V u] / E[u]`, exact at an eigenfunction since the derivative
    /// terms integrate to zero.
    fn estimate(&self, u: &[f64]) -> f64 {
        let vu: Vec<f64> = self.v.iter().zip(u).map(|(a, b)| a * b).collect();
        -pairwise_sum(&vu) / pairwise_sum(u)
    }

    fn residual(&self, u: &[f64], lam: f64) -> f64 {
        let au = self.apply(u);
        let r: f64 = au.iter().zip(u).map(|(a, b)| (a - lam * b).powi(2)).sum();
        (r / u.iter().map(|b| b * b).sum::<f64>()).sqrt()
    }
}

fn normalize(u: &mut [f64]) -> Result<()> {
    let m = pairwise_sum(u) / u.len() as f64;
    if !(m.is_finite() && m != 0.0) {
        return Err(Error::Numerical("eigenvector iterate degenerated".into()));
    }
    for x in u.iter_mut() {
        *x /= m;
    }
    Ok(())
}

/// Dominant eigenvalue and positive eigenfunction of `A`.
pub fn principal_eigenvalue(v: &PotentialField, lambda: &[f64], cfg: &EigConfig) -> Result<EigResult> {
    let grid = *v.grid();
    if lambda.len() != grid.dim() || lambda.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("drift must be a finite vector of the grid dimension"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::param("eigenvalue tolerance must be positive"));
    }
    let gen = Generator::new(v, lambda);
    let (u, lam, iterations, residual) = if v.is_constant() {
        let u = vec![1.0; grid.len()];
        let lam = gen.estimate(&u);
        let r = gen.residual(&u, lam);
        (u, lam, 0, r)
    } else {
        match cfg.method {
            EigMethod::Propagator => propagate(&gen, v, cfg)?,
            EigMethod::ShiftInvert => shift_invert(&gen, v, cfg)?,
        }
    };
    let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if lo <= -1e-8 * hi {
        return Err(Error::Numerical(format!(
            "principal eigenfunction changes sign (min {lo:.3e}, max {hi:.3e})"
        )));
    }
    Ok(EigResult {
        lambda_drift: lambda.to_vec(),
        principal_value: lam,
        eigenfield: ScalarField::new(grid, u)?,
        iterations,
        residual,
    })
}

fn propagate(gen: &Generator, v: &PotentialField, cfg: &EigConfig) -> Result<(Vec<f64>, f64, usize, f64)> {
    let grid = *v.grid();
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    let dt = 0.2 * h * h / grid.dim() as f64;
    let mut u = vec![1.0; grid.len()];
    let mut steps = 0;
    loop {
        for _ in 0..cfg.window {
            let au = gen.apply(&u);
            for (x, a) in u.iter_mut().zip(&au) {
                *x += dt * a;
            }
        }
        steps += cfg.window;
        normalize(&mut u)?;
        let lam = gen.estimate(&u);
        let r = gen.residual(&u, lam);
        if r <= cfg.tol {
            return Ok((u, lam, steps, r));
        }
        if steps >= cfg.max_steps {
            return Err(Error::Convergence {
                context: "propagator power iteration".into(),
                iterations: steps,
                residual: r,
                best: Some(u),
            });
        }
    }
}

fn shift_invert(gen: &Generator, v: &PotentialField, cfg: &EigConfig) -> Result<(Vec<f64>, f64, usize, f64)> {
    let grid = *v.grid();
    let ft = &gen.ft;
    // every eigenvalue has real part at most -min V, so this shift keeps the
    // principal one closest
    let shift = -v.v_min() + 1.0;
    let vbar = v.v_mean();
    let precond: Vec<Complex64> = gen
        .symbol
        .iter()
        .map(|k| 1.0 / (Complex64::new(shift + vbar, 0.0) - k))
        .collect();
    let apply_p = |x: &[f64]| -> Vec<f64> {
        let mut s = ft.forward_real(x);
        for (z, p) in s.iter_mut().zip(&precond) {
            *z *= p;
        }
        ft.inverse_real(&s)
    };
    let apply_m = |x: &[f64]| -> Vec<f64> {
        let ax = gen.apply(x);
        x.iter().zip(&ax).map(|(a, b)| shift * a - b).collect()
    };
    let mut u = vec![1.0; grid.len()];
    let mut x0: Option<Vec<f64>> = None;
    let mut r = f64::INFINITY;
    for it in 1..=cfg.max_outer {
        let (x, _) = gmres(&apply_m, &apply_p, &u, x0.as_deref(), cfg)?;
        u = x;
        normalize(&mut u)?;
        let lam = gen.estimate(&u);
        r = gen.residual(&u, lam);
        if r <= cfg.tol {
            return Ok((u, lam, it, r));
        }
        // the next solution is close to u / (shift - lambda)
        x0 = Some(u.iter().map(|a| a / (shift - lam)).collect());
    }
    Err(Error::Convergence {
        context: "shift-invert iteration".into(),
        iterations: cfg.max_outer,
        residual: r,
        best: Some(u),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative residual below which a stalled GMRES cycle counts as converged.
const STALL_FLOOR: f64 = 1e-9;

/// Restarted GMRES for `M x = b` with right preconditioner `P`.
fn gmres<M, P>(m: &M, p: &P, b: &[f64], x0: Option<&[f64]>, cfg: &EigConfig) -> Result<(Vec<f64>, usize)>
where
    M: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bn = dot(b, b).sqrt();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if bn == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let restart = cfg.gmres_restart.max(2);
    let mut total = 0;
    let mut previous = f64::INFINITY;
    loop {
        let mx = m(&x);
        let r: Vec<f64> = b.iter().zip(&mx).map(|(a, c)| a - c).collect();
        let beta = dot(&r, &r).sqrt();
        // a cycle that no longer halves the residual has hit the roundoff floor
        let stalled = beta > 0.5 * previous && beta <= STALL_FLOOR * bn;
        if beta <= cfg.gmres_tol * bn || stalled {
            return Ok((x, total));
        }
        previous = beta;
        if total >= cfg.gmres_max_iter {
            return Err(Error::Convergence {
                context: "GMRES".into(),
                iterations: total,
                residual: beta / bn,
                best: Some(x),
            });
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart {
            let mut w = m(&p(&basis[k]));
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(&w, q);
                h[i][k] = hij;
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= hij * qi;
                }
            }
            let wn = dot(&w, &w).sqrt();
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            h[k][k] = den;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            total += 1;
            let done = g[k].abs() <= cfg.gmres_tol * bn || wn == 0.0;
            if done || k == restart || total >= cfg.gmres_max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut yk = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = ((i + 1)..k).map(|j| h[i][j] * yk[j]).sum();
            yk[i] = (g[i] - s) / h[i][i];
        }
        let mut z = vec![0.0; n];
        for (yi, q) in yk.iter().zip(&basis) {
            for (zi, qi) in z.iter_mut().zip(q) {
                *zi += yi * qi;
            }
        }
        for (xi, pi) in x.iter_mut().zip(p(&z)) {
            *xi += pi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{realize, PotentialSpec};
    use crate::torus_field::TorusGrid;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    /// Dense periodic spectral differentiation matrices on `n` points of a
    /// unit-period circle, from the closed-form cotangent kernels.
    fn dense_operators(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let h = 2.0 * PI / n as f64;
        let scale = 2.0 * PI;
        let mut d1 = DMatrix::zeros(n, n);
        let mut d2 = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let k = i as isize - j as isize;
                let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                if k == 0 {
                    d2[(i, j)] = (-PI * PI / (3.0 * h * h) - 1.0 / 6.0) * scale * scale;
                } else {
                    let t = k as f64 * h / 2.0;
                    d1[(i, j)] = 0.5 * sign / t.tan() * scale;
                    d2[(i, j)] = -sign / (2.0 * t.sin().powi(2)) * scale * scale;
                }
            }
        }
        (d1, d2)
    }

    fn dense_principal(v: &PotentialField, lambda: f64) -> f64 {
        let n = v.grid().n();
        let (d1, d2) = dense_operators(n);
        let mut a = d2 * 0.5 + d1 * lambda;
        for i in 0..n {
            a[(i, i)] -= v.field().values()[i];
        }
        if lambda == 0.0 {
            a.symmetric_eigen().eigenvalues.max()
        } else {
            a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
        }
    }

    fn cosine(n: usize) -> PotentialField {
        realize(&PotentialSpec::cosine(1.0), &TorusGrid::line(n, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn constant_potential_is_exact() {
        let g = TorusGrid::square(16, 1.0).unwrap();
        let v = realize(&PotentialSpec::constant(0.7), &g).unwrap();
        for lam in [[0.0, 0.0], [1.0, -2.0]] {
            let r = principal_eigenvalue(&v, &lam, &EigConfig::default()).unwrap();
            assert!((r.principal_value + 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_eigensolver() {
        let v = cosine(128);
        let oracle = dense_principal(&v, 0.0);
        for method in [EigMethod::ShiftInvert, EigMethod::Propagator] {
            let cfg = EigConfig {
                method,
                ..EigConfig::default()
            };
            let r = principal_eigenvalue(&v, &[0.0], &cfg).unwrap();
            assert!((r.principal_value - oracle).abs() < 1e-6, "{method:?}: {} vs {oracle}", r.principal_value);
            assert!(r.eigenfield.min() > 0.0);
            assert!((r.eigenfield.mean() - 1.0).abs() < 1e-12);
        }
        let cfg = EigConfig::default();
        let v = cosine(64);
        for lam in [0.7, -1.3] {
            let oracle = dense_principal(&v, lam);
            let r = principal_eigenvalue(&v, &[lam], &cfg).unwrap();
            assert!((r.principal_value - oracle).abs() < 1e-8, "{lam}: {} vs {oracle}", r.principal_value);
        }
    }

    #[test]
    fn reflection_symmetry_and_bounds() {
        let g = TorusGrid::square(32, 1.0).unwrap();
        let v = realize(&PotentialSpec::cosine(1.0), &g).unwrap();
        let cfg = EigConfig::default();
        let a = principal_eigenvalue(&v, &[0.4, 0.9], &cfg).unwrap().principal_value;
        let b = principal_eigenvalue(&v, &[-0.4, -0.9], &cfg).unwrap().principal_value;
        assert!((a - b).abs() < 1e-9);
        let z = principal_eigenvalue(&v, &[0.0, 0.0], &cfg).unwrap().principal_value;
        assert!(z <= 0.0 && z >= -v.v_max());
        assert!(a <= z + 1e-12);
    }

    #[test]
    fn bad_input() {
        let v = cosine(32);
        assert!(principal_eigenvalue(&v, &[0.0, 1.0], &EigConfig::default()).is_err());
        let cfg = EigConfig {
            method: EigMethod::Propagator,
            max_steps: 50,
            ..EigConfig::default()
        };
        assert!(matches!(
            principal_eigenvalue(&v, &[0.0], &cfg),
            Err(Error::Convergence { .. })
        ));
    }
}
