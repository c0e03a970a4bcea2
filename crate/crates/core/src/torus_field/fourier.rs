//! Discrete Fourier transforms on a [`TorusGrid`].
//!
//! Forward transforms are unnormalized; inverse transforms divide by the point
//! count, so `inverse(forward(u)) == u`.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::TorusGrid;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Cached FFT plans and derivative symbols for one grid.
#[derive(Clone)]
pub struct Fourier {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `k_axis` per flat bin with the Nyquist bin zeroed (odd derivatives).
    deriv: [Vec<f64>; 2],
    /// `-|k|^2` per flat bin including the Nyquist bin.
    laplace: Vec<f64>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("grid", &self.grid).finish()
    }
}

impl Fourier {
    pub fn new(grid: TorusGrid) -> Self {
        let n = grid.n();
        let (fwd, inv) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(n), p.plan_fft_inverse(n))
        });
        let len = grid.len();
        let mut deriv = [vec![0.0; len], vec![0.0; len]];
        let mut laplace = vec![0.0; len];
        for idx in 0..len {
            let m = grid.multi_index(idx);
            let mut k2 = 0.0;
            for axis in 0..grid.dim() {
                let k = grid.wavenumber(axis, m[axis]);
                k2 += k * k;
                if grid.frequency(m[axis]) != (n / 2) as isize {
                    deriv[axis][idx] = k;
                }
            }
            laplace[idx] = -k2;
        }
        Self {
            grid,
            fwd,
            inv,
            deriv,
            laplace,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Odd-derivative symbol along `axis` (multiply by `i` times this).
    pub fn deriv_symbol(&self, axis: usize) -> &[f64] {
        &self.deriv[axis]
    }

    pub fn laplace_symbol(&self) -> &[f64] {
        &self.laplace
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        plan.process(data);
        if self.grid.dim() == 2 {
            transpose_in_place(data, n);
            plan.process(data);
            transpose_in_place(data, n);
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
        let scale = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut data = spectrum.to_vec();
        self.inverse(&mut data);
        data.into_iter().map(|z| z.re).collect()
    }

    /// Spectral derivative along `axis` of a real field given by its spectrum.
    pub fn derivative(&self, spectrum: &[Complex64], axis: usize) -> Vec<f64> {
        let sym = &self.deriv[axis];
        let data: Vec<Complex64> = spectrum
            .iter()
            .zip(sym)
            .map(|(z, &k)| Complex64::new(-k * z.im, k * z.re))
            .collect();
        self.inverse_real(&data)
    }
}

fn transpose_in_place(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_2d() {
        let g = TorusGrid::square(16, 1.0).unwrap();
        let ft = Fourier::new(g);
        let values: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 31) as f64 * 0.1).collect();
        let back = ft.inverse_real(&ft.forward_real(&values));
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_lands_in_its_bin() {
        let g = TorusGrid::square(8, 1.0).unwrap();
        let ft = Fourier::new(g);
        let values: Vec<f64> = (0..g.len())
            .map(|i| {
                let [_, x1] = g.coord(i);
                (2.0 * std::f64::consts::PI * x1).cos()
            })
            .collect();
        let spec = ft.forward_real(&values);
        let bin = g.flat_index(0, 1);
        let bin2 = g.flat_index(0, -1);
        assert!((spec[bin].re - 32.0).abs() < 1e-10);
        assert!((spec[bin2].re - 32.0).abs() < 1e-10);
    }
}
