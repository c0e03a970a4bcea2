use super::{Fourier, ScalarField};
use crate::error::{Error, Result};

/// Smooth compactly supported bump `exp(1 - 1/(1 - u^2))` on `|u| < 1`, peak 1 at 0.
pub fn bump(u: f64) -> f64 {
    let u2 = u * u;
    if u2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u2)).exp()
    }
}

/// Periodic convolution with the bump kernel of radius `eps`.
///
/// The kernel is sampled on the grid with minimum-image distances and normalized
/// to unit discrete mass, so grid averages are preserved and the output lies in
/// the range of the input.
pub fn convolve_periodic(field: &ScalarField, eps: f64) -> Result<ScalarField> {
    let grid = *field.grid();
    if !(eps > 0.0 && eps < 0.5 * grid.min_period()) {
        return Err(Error::param(format!(
            "mollification radius {eps} must lie in (0, {})",
            0.5 * grid.min_period()
        )));
    }
    let origin = [0.0, 0.0];
    let mut kernel: Vec<f64> = (0..grid.len())
        .map(|i| {
            let d = grid.min_image(grid.coord(i), origin);
            bump((d[0] * d[0] + d[1] * d[1]).sqrt() / eps)
        })
        .collect();
    let mass: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= mass;
    }
    let ft = Fourier::new(grid);
    let kh = ft.forward_real(&kernel);
    let mut fh = ft.forward_real(field.values());
    for (a, b) in fh.iter_mut().zip(&kh) {
        // the kernel is even, so its transform is real up to rounding
        *a *= b.re;
    }
    let out = ft.inverse_real(&fh);
    Ok(ScalarField::from_vec_unchecked(grid, out))
}
