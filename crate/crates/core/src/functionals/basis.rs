use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::torus_field::{pairwise_sum, ScalarField, TorusGrid};

/// Largest admissible `|g|` before `exp(g)` is considered unsafe.
pub const LOG_DENSITY_BOUND: f64 = 30.0;

/// Real Fourier coefficients of the log-density `g`.
///
/// Along each axis the basis is `1, cos(2 pi x / L), sin(2 pi x / L), ...,
/// cos(2 pi k x / L), sin(2 pi k x / L)` with `k = (m - 1) / 2`; in 2D the
/// basis is the tensor product, coefficient `(j0, j1)` stored at `j0 + m j1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    pub dim: usize,
    pub cutoff: usize,
    pub coeffs: Vec<f64>,
}

impl DensityParams {
    pub fn default_cutoff(dim: usize) -> usize {
        if dim == 1 {
            9
        } else {
            5
        }
    }

    /// All-zero coefficients, i.e. `f = 1`.
    pub fn uniform(dim: usize, cutoff: usize) -> Result<Self> {
        check_shape(dim, cutoff)?;
        Ok(Self {
            dim,
            cutoff,
            coeffs: vec![0.0; cutoff.pow(dim as u32)],
        })
    }

    pub fn new(dim: usize, cutoff: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_shape(dim, cutoff)?;
        if coeffs.len() != cutoff.pow(dim as u32) {
            return Err(Error::param(format!(
                "expected {} coefficients, got {}",
                cutoff.pow(dim as u32),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("non-finite density coefficient"));
        }
        Ok(Self { dim, cutoff, coeffs })
    }

    /// Same function with cutoff `cutoff`; new modes start at zero, dropped
    /// modes are discarded.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        let mut out = Self::uniform(self.dim, cutoff)?;
        let m = self.cutoff.min(cutoff);
        let strides = |c: usize| if self.dim == 1 { 0 } else { c };
        for j1 in 0..if self.dim == 1 { 1 } else { m } {
            for j0 in 0..m {
                out.coeffs[j0 + strides(cutoff) * j1] = self.coeffs[j0 + strides(self.cutoff) * j1];
            }
        }
        Ok(out)
    }
}

fn check_shape(dim: usize, cutoff: usize) -> Result<()> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::param("dimension must be 1 or 2"));
    }
    if cutoff == 0 || cutoff % 2 == 0 {
        return Err(Error::param(format!("cutoff {cutoff} must be odd")));
    }
    Ok(())
}

/// Frequency index of basis function `j` along one axis.
pub(crate) fn mode_frequency(j: usize) -> usize {
    j.div_ceil(2)
}

/// Basis functions tabulated on a grid.
#[derive(Debug, Clone)]
pub(crate) struct Basis {
    grid: TorusGrid,
    cutoff: usize,
    /// `tables[axis][j * n + i]` is basis function `j` at grid index `i`.
    tables: [Vec<f64>; 2],
}

impl Basis {
    pub(crate) fn new(grid: TorusGrid, cutoff: usize) -> Result<Self> {
        check_shape(grid.dim(), cutoff)?;
        let n = grid.n();
        if mode_frequency(cutoff - 1) >= n / 2 {
            return Err(Error::param(format!(
                "cutoff {cutoff} is not resolved by {n} points per axis"
            )));
        }
        let mut tables = [Vec::new(), Vec::new()];
        for table in tables.iter_mut().take(grid.dim()) {
            *table = vec![0.0; cutoff * n];
            for j in 0..cutoff {
                let k = mode_frequency(j) as f64;
                for i in 0..n {
                    let t = 2.0 * PI * k * i as f64 / n as f64;
                    table[j * n + i] = if j == 0 {
                        1.0
                    } else if j % 2 == 1 {
                        t.cos()
                    } else {
                        t.sin()
                    };
                }
            }
        }
        Ok(Self {
            grid,
            cutoff,
            tables,
        })
    }

    fn check(&self, p: &DensityParams) -> Result<()> {
        if p.dim != self.grid.dim() || p.cutoff != self.cutoff {
            return Err(Error::param(format!(
                "density parameters (dim {}, cutoff {}) do not match basis (dim {}, cutoff {})",
                p.dim,
                p.cutoff,
                self.grid.dim(),
                self.cutoff
            )));
        }
        Ok(())
    }

    /// `g = sum_j theta_j phi_j` on the grid.
    pub(crate) fn log_density(&self, p: &DensityParams) -> Result<Vec<f64>> {
        self.check(p)?;
        let n = self.grid.n();
        let m = self.cutoff;
        let t0 = &self.tables[0];
        if self.grid.dim() == 1 {
            let mut g = vec![0.0; n];
            for (j, c) in p.coeffs.iter().enumerate() {
                if *c != 0.0 {
                    for (gi, b) in g.iter_mut().zip(&t0[j * n..(j + 1) * n]) {
                        *gi += c * b;
                    }
                }
            }
            return Ok(g);
        }
        let t1 = &self.tables[1];
        // contract axis 0 first: h[j1][i0] = sum_j0 theta[j0 + m j1] b_j0(i0)
        let mut h = vec![0.0; m * n];
        for j1 in 0..m {
            for j0 in 0..m {
                let c = p.coeffs[j0 + m * j1];
                if c != 0.0 {
                    for (hi, b) in h[j1 * n..(j1 + 1) * n].iter_mut().zip(&t0[j0 * n..(j0 + 1) * n]) {
                        *hi += c * b;
                    }
                }
            }
        }
        let mut g = vec![0.0; n * n];
        for i1 in 0..n {
            let row = &mut g[i1 * n..(i1 + 1) * n];
            for j1 in 0..m {
                let b = t1[j1 * n + i1];
                for (gi, hi) in row.iter_mut().zip(&h[j1 * n..(j1 + 1) * n]) {
                    *gi += b * hi;
                }
            }
        }
        Ok(g)
    }

    /// `E[u phi_j]` for every basis function.
    pub(crate) fn project(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let m = self.cutoff;
        let t0 = &self.tables[0];
        let inv = 1.0 / u.len() as f64;
        if self.grid.dim() == 1 {
            return (0..m)
                .map(|j| {
                    let prod: Vec<f64> = u.iter().zip(&t0[j * n..(j + 1) * n]).map(|(a, b)| a * b).collect();
                    pairwise_sum(&prod) * inv
                })
                .collect();
        }
        let t1 = &self.tables[1];
        // s[j0][i1] = sum_i0 u(i0, i1) b_j0(i0)
        let mut s = vec![0.0; m * n];
        for i1 in 0..n {
            let row = &u[i1 * n..(i1 + 1) * n];
            for j0 in 0..m {
                let prod: Vec<f64> = row.iter().zip(&t0[j0 * n..(j0 + 1) * n]).map(|(a, b)| a * b).collect();
                s[j0 * n + i1] = pairwise_sum(&prod);
            }
        }
        let mut out = vec![0.0; m * m];
        for j1 in 0..m {
            for j0 in 0..m {
                let prod: Vec<f64> = s[j0 * n..(j0 + 1) * n]
                    .iter()
                    .zip(&t1[j1 * n..(j1 + 1) * n])
                    .map(|(a, b)| a * b)
                    .collect();
                out[j0 + m * j1] = pairwise_sum(&prod) * inv;
            }
        }
        out
    }

    /// `f = exp(g) / E[exp(g)]`; errors if `|g|` exceeds the safe bound.
    pub(crate) fn density(&self, p: &DensityParams) -> Result<ScalarField> {
        let mut g = self.log_density(p)?;
        let peak = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(peak <= LOG_DENSITY_BOUND) {
            return Err(Error::param(format!(
                "log-density reaches {peak:.2}, beyond the bound {LOG_DENSITY_BOUND}"
            )));
        }
        let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in g.iter_mut() {
            *v = (*v - gmax).exp();
        }
        let m = pairwise_sum(&g) / g.len() as f64;
        for v in g.iter_mut() {
            *v /= m;
        }
        Ok(ScalarField::from_vec_unchecked(self.grid, g))
    }

    /// Pulls a functional derivative `G` (so that `dF = E[G df]`) back to
    /// the coefficients: `dF/dtheta_j = E[G f phi_j] - E[G f] E[f phi_j]`.
    pub(crate) fn pull_back(&self, f: &ScalarField, derivative: &[f64]) -> Vec<f64> {
        let gf: Vec<f64> = derivative.iter().zip(f.values()).map(|(a, b)| a * b).collect();
        let egf = pairwise_sum(&gf) / gf.len() as f64;
        let a = self.project(&gf);
        let b = self.project(f.values());
        a.iter().zip(&b).map(|(x, y)| x - egf * y).collect()
    }
}

/// `f = exp(g) / E[exp(g)]` for the parametrized log-density `g`.
pub fn density(params: &DensityParams, grid: &TorusGrid) -> Result<ScalarField> {
    Basis::new(*grid, params.cutoff)?.density(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_give_uniform_density() {
        let g = TorusGrid::square(16, 1.0).unwrap();
        let p = DensityParams::uniform(2, 5).unwrap();
        let f = density(&p, &g).unwrap();
        assert!(f.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn single_cosine_is_normalized() {
        let g = TorusGrid::line(64, 1.0).unwrap();
        let mut p = DensityParams::uniform(1, 9).unwrap();
        p.coeffs[1] = 0.8;
        let f = density(&p, &g).unwrap();
        assert!((f.mean() - 1.0).abs() < 1e-12);
        let raw = ScalarField::from_fn(g, |x| (0.8 * (2.0 * PI * x[0]).cos()).exp());
        let m = raw.mean();
        for (a, b) in f.values().iter().zip(raw.values()) {
            assert!((a - b / m).abs() < 1e-13);
        }
    }

    #[test]
    fn tensor_layout_and_projection() {
        let g = TorusGrid::new(2, 16, &[1.0, 2.0]).unwrap();
        let b = Basis::new(g, 5).unwrap();
        let mut p = DensityParams::uniform(2, 5).unwrap();
        // cos(2 pi x0) * sin(4 pi x1 / 2)
        p.coeffs[1 + 5 * 4] = 1.0;
        let lg = b.log_density(&p).unwrap();
        let exact = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos() * (2.0 * PI * 2.0 * x[1] / 2.0).sin());
        for (a, e) in lg.iter().zip(exact.values()) {
            assert!((a - e).abs() < 1e-13);
        }
        let proj = b.project(&lg);
        for (j, v) in proj.iter().enumerate() {
            let expect = if j == 1 + 5 * 4 { 0.25 } else { 0.0 };
            assert!((v - expect).abs() < 1e-13, "{j}: {v}");
        }
    }

    #[test]
    fn bound_and_shape_errors() {
        let g = TorusGrid::line(32, 1.0).unwrap();
        let mut p = DensityParams::uniform(1, 9).unwrap();
        p.coeffs[2] = 31.0;
        assert!(matches!(density(&p, &g), Err(Error::Parameter(_))));
        assert!(DensityParams::uniform(1, 4).is_err());
        assert!(DensityParams::new(2, 3, vec![0.0; 3]).is_err());
        let small = TorusGrid::line(8, 1.0).unwrap();
        assert!(Basis::new(small, 9).is_err());
    }

    #[test]
    fn cutoff_change_keeps_shared_modes() {
        let p = DensityParams::new(2, 3, (0..9).map(|i| i as f64).collect()).unwrap();
        let q = p.with_cutoff(5).unwrap();
        assert_eq!(q.coeffs[2 + 5 * 1], p.coeffs[2 + 3 * 1]);
        assert_eq!(q.with_cutoff(3).unwrap(), p);
    }
}
