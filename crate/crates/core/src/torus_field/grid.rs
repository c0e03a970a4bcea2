use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[0, L_1) x ... x [0, L_d)` with `d` in `{1, 2}`.
///
/// Points are stored with axis 0 varying fastest, so a 2D field is a sequence
/// of contiguous rows along axis 0. All index arithmetic wraps modulo `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    period: [f64; 2],
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, period: &[f64]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::param(format!(
                "points per dimension must be a power of two >= 8, got {n}"
            )));
        }
        let period = match period {
            [l] => [*l, *l],
            [l0, l1] if dim == 2 => [*l0, *l1],
            _ => {
                return Err(Error::param(format!(
                    "expected 1 or {dim} periods, got {}",
                    period.len()
                )))
            }
        };
        if period[..dim].iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::param("periods must be positive and finite"));
        }
        Ok(Self { dim, n, period })
    }

    /// One-dimensional grid of period `period`.
    pub fn line(n: usize, period: f64) -> Result<Self> {
        Self::new(1, n, &[period])
    }

    /// Two-dimensional grid with the same period on both axes.
    pub fn square(n: usize, period: f64) -> Result<Self> {
        Self::new(2, n, &[period, period])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.period[axis]
    }

    pub fn periods(&self) -> &[f64] {
        &self.period[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.period[axis] / self.n as f64
    }

    pub fn min_period(&self) -> f64 {
        self.periods().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Total number of points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.periods().iter().product()
    }

    /// Per-axis integer index of flat index `idx`.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        [idx % self.n, idx / self.n]
    }

    /// Flat index of the (wrapped) multi-index.
    pub fn flat_index(&self, i0: isize, i1: isize) -> usize {
        let n = self.n as isize;
        let a = i0.rem_euclid(n) as usize;
        if self.dim == 1 {
            a
        } else {
            a + self.n * i1.rem_euclid(n) as usize
        }
    }

    /// Physical coordinates of grid point `idx`; unused axes are zero.
    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let [i0, i1] = self.multi_index(idx);
        let x0 = i0 as f64 * self.spacing(0);
        let x1 = if self.dim == 2 {
            i1 as f64 * self.spacing(1)
        } else {
            0.0
        };
        [x0, x1]
    }

    /// Signed frequency index of FFT bin `m` (Nyquist maps to `+n/2`).
    pub fn frequency(&self, m: usize) -> isize {
        let n = self.n as isize;
        let m = m as isize;
        if m <= n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Angular wave number of FFT bin `m` on `axis`.
    pub fn wavenumber(&self, axis: usize, m: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency(m) as f64 / self.period[axis]
    }

    /// `[L_0, L_1]`-periodic minimum-image displacement from `b` to `a`.
    pub fn min_image(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for axis in 0..self.dim {
            let l = self.period[axis];
            let mut d = (a[axis] - b[axis]).rem_euclid(l);
            if d > 0.5 * l {
                d -= l;
            }
            out[axis] = d;
        }
        out
    }

    /// The grid refined by a factor two in every dimension.
    pub fn refined(&self) -> Self {
        Self {
            n: self.n * 2,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(TorusGrid::new(3, 16, &[1.0]).is_err());
        assert!(TorusGrid::new(1, 4, &[1.0]).is_err());
        assert!(TorusGrid::new(1, 24, &[1.0]).is_err());
        assert!(TorusGrid::new(1, 16, &[0.0]).is_err());
        assert!(TorusGrid::new(2, 16, &[1.0, -2.0]).is_err());
        assert!(TorusGrid::new(1, 16, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn indexing_wraps() {
        let g = TorusGrid::new(2, 8, &[1.0, 2.0]).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.flat_index(-1, 0), 7);
        assert_eq!(g.flat_index(8, 9), 8);
        assert_eq!(g.multi_index(g.flat_index(3, 5)), [3, 5]);
        let [x0, x1] = g.coord(g.flat_index(2, 4));
        assert!((x0 - 0.25).abs() < 1e-15 && (x1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn frequencies_and_image() {
        let g = TorusGrid::line(8, 2.0).unwrap();
        let f: Vec<isize> = (0..8).map(|m| g.frequency(m)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, 4, -3, -2, -1]);
        let d = g.min_image([1.9, 0.0], [0.1, 0.0]);
        assert!((d[0] + 0.2).abs() < 1e-12);
    }
}
