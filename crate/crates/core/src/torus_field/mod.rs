//! Grid-sampled periodic fields and the differential operators acting on them.
//!
//! Expectations over the torus are equal-weight grid averages. Derivatives are
//! spectral by default (odd derivatives drop the Nyquist bin so that the
//! discrete `d/dx` stays skew-adjoint); a centred second-order finite
//! difference is available for comparison.

mod fourier;
mod grid;
mod mollify;

use serde::{Deserialize, Serialize};

pub use fourier::Fourier;
pub use grid::TorusGrid;
pub use mollify::{bump, convolve_periodic};

use crate::error::{Error, Result};

/// How derivatives are discretized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffMethod {
    #[default]
    Spectral,
    FiniteDifference,
}

/// A real function sampled on every point of a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(format!(
                "field has {} values but grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f` at the physical coordinates of every grid point.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coord(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        mean(self)
    }

    /// Linear (1D) or bilinear (2D) periodic interpolation at physical point `x`.
    pub fn interpolate(&self, x: [f64; 2]) -> f64 {
        let g = &self.grid;
        let n = g.n();
        let locate = |axis: usize| {
            let s = (x[axis] / g.spacing(axis)).rem_euclid(n as f64);
            let i = (s.floor() as usize).min(n - 1);
            (i, s - i as f64)
        };
        let (i0, t0) = locate(0);
        let j0 = (i0 + 1) % n;
        if g.dim() == 1 {
            return (1.0 - t0) * self.values[i0] + t0 * self.values[j0];
        }
        let (i1, t1) = locate(1);
        let j1 = (i1 + 1) % n;
        let v = |a: usize, b: usize| self.values[a + n * b];
        (1.0 - t1) * ((1.0 - t0) * v(i0, i1) + t0 * v(j0, i1))
            + t1 * ((1.0 - t0) * v(i0, j1) + t0 * v(j0, j1))
    }
}

/// `d` scalar fields on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::param("vector field needs at least one component"))?;
        let grid = *first.grid();
        if components.len() != grid.dim() || components.iter().any(|c| *c.grid() != grid) {
            return Err(Error::param(
                "vector field components must match the grid dimension and share one grid",
            ));
        }
        Ok(Self { components })
    }

    pub fn constant(grid: TorusGrid, value: &[f64]) -> Self {
        Self {
            components: (0..grid.dim())
                .map(|a| ScalarField::constant(grid, value[a]))
                .collect(),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    /// Componentwise grid averages.
    pub fn mean(&self) -> Vec<f64> {
        self.components.iter().map(mean).collect()
    }

    /// Pointwise squared Euclidean norm.
    pub fn norm_sq(&self) -> ScalarField {
        let grid = *self.grid();
        let mut out = vec![0.0; grid.len()];
        for c in &self.components {
            for (o, v) in out.iter_mut().zip(c.values()) {
                *o += v * v;
            }
        }
        ScalarField::from_vec_unchecked(grid, out)
    }
}

/// Grid average, the discrete expectation.
pub fn mean(field: &ScalarField) -> f64 {
    pairwise_sum(field.values()) / field.values().len() as f64
}

/// Order-fixed pairwise summation.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Derivative with respect to physical coordinate `axis`.
pub fn partial(field: &ScalarField, axis: usize, method: DiffMethod) -> ScalarField {
    let grid = *field.grid();
    match method {
        DiffMethod::Spectral => {
            let ft = Fourier::new(grid);
            let spec = ft.forward_real(field.values());
            ScalarField::from_vec_unchecked(grid, ft.derivative(&spec, axis))
        }
        DiffMethod::FiniteDifference => {
            let h = grid.spacing(axis);
            let v = field.values();
            let out = (0..grid.len())
                .map(|idx| {
                    let [i0, i1] = grid.multi_index(idx);
                    let (i0, i1) = (i0 as isize, i1 as isize);
                    let (p, m) = if axis == 0 {
                        (grid.flat_index(i0 + 1, i1), grid.flat_index(i0 - 1, i1))
                    } else {
                        (grid.flat_index(i0, i1 + 1), grid.flat_index(i0, i1 - 1))
                    };
                    (v[p] - v[m]) / (2.0 * h)
                })
                .collect();
            ScalarField::from_vec_unchecked(grid, out)
        }
    }
}

pub fn gradient(field: &ScalarField, method: DiffMethod) -> VectorField {
    let grid = *field.grid();
    let components = match method {
        DiffMethod::Spectral => {
            let ft = Fourier::new(grid);
            let spec = ft.forward_real(field.values());
            (0..grid.dim())
                .map(|a| ScalarField::from_vec_unchecked(grid, ft.derivative(&spec, a)))
                .collect()
        }
        DiffMethod::FiniteDifference => (0..grid.dim())
            .map(|a| partial(field, a, method))
            .collect(),
    };
    VectorField { components }
}

pub fn divergence(vf: &VectorField, method: DiffMethod) -> ScalarField {
    let grid = *vf.grid();
    let mut out = vec![0.0; grid.len()];
    for (axis, c) in vf.components().iter().enumerate() {
        let d = partial(c, axis, method);
        for (o, v) in out.iter_mut().zip(d.values()) {
            *o += v;
        }
    }
    ScalarField::from_vec_unchecked(grid, out)
}

/// Rotated gradient `(d_2 w, -d_1 w)` of a 2D stream function.
pub fn rotated_gradient(stream: &ScalarField, method: DiffMethod) -> Result<VectorField> {
    if stream.grid().dim() != 2 {
        return Err(Error::param("stream functions need a 2D grid"));
    }
    let g = gradient(stream, method);
    let [d0, d1] = [g.component(0), g.component(1)];
    Ok(VectorField {
        components: vec![d1.clone(), d0.map(|v| -v)],
    })
}
