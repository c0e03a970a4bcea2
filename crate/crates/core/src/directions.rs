//! Sweeps over unit directions `eta` on `S^{d-1}` for `d` in `{1, 2}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Uniform angles on the full circle (2D only).
    pub angles: usize,
    /// Golden-section stopping width in radians.
    pub angle_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            angles: 64,
            angle_tol: 1e-6,
        }
    }
}

/// Best direction found by a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptimum {
    pub value: f64,
    pub direction: Vec<f64>,
    pub evaluations: usize,
}

pub fn unit(angle: f64) -> [f64; 2] {
    [angle.cos(), angle.sin()]
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximizes `objective` over unit directions.
///
/// In 1D the candidates are `+1` and `-1`. In 2D a uniform angle sweep locates
/// the best sample, then golden-section search refines inside its two
/// neighbouring intervals. The objective returns `Ok(None)` for directions it
/// wants skipped.
pub fn maximize<F>(dim: usize, cfg: &SweepConfig, mut objective: F) -> Result<SweepOptimum>
where
    F: FnMut(&[f64]) -> Result<Option<f64>>,
{
    let mut evaluations = 0;
    let mut eval = |dir: &[f64]| -> Result<f64> {
        evaluations += 1;
        Ok(objective(dir)?.unwrap_or(f64::NEG_INFINITY))
    };
    if dim == 1 {
        let a = eval(&[1.0])?;
        let b = eval(&[-1.0])?;
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            return Err(Error::param("every direction was skipped"));
        }
        let (value, direction) = if a >= b { (a, vec![1.0]) } else { (b, vec![-1.0]) };
        return Ok(SweepOptimum {
            value,
            direction,
            evaluations,
        });
    }
    if cfg.angles < 3 {
        return Err(Error::param("a 2D sweep needs at least 3 angles"));
    }
    let step = 2.0 * std::f64::consts::PI / cfg.angles as f64;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in 0..cfg.angles {
        let v = eval(&unit(k as f64 * step))?;
        if v > best.0 {
            best = (v, k);
        }
    }
    if best.0 == f64::NEG_INFINITY {
        return Err(Error::param("every direction was skipped"));
    }
    let center = best.1 as f64 * step;
    let (angle, value) = golden_max(center - step, center + step, cfg.angle_tol, |t| {
        eval(&unit(t))
    })?;
    let (value, angle) = if value >= best.0 {
        (value, angle)
    } else {
        (best.0, center)
    };
    Ok(SweepOptimum {
        value,
        direction: unit(angle).to_vec(),
        evaluations,
    })
}

/// Maximizes `objective(angle)` over the open arc `(center - half_width,
/// center + half_width)`: `samples` interior points, then golden-section
/// search in the two intervals around the best one. Returns `(angle, value)`.
pub fn maximize_arc<F>(
    center: f64,
    half_width: f64,
    samples: usize,
    tol: f64,
    mut objective: F,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if samples == 0 {
        return Err(Error::param("an arc sweep needs at least one sample"));
    }
    let step = 2.0 * half_width / (samples + 1) as f64;
    let lo = center - half_width;
    let mut best = (f64::NEG_INFINITY, lo + step);
    for k in 1..=samples {
        let t = lo + k as f64 * step;
        let v = objective(t)?;
        if v > best.0 {
            best = (v, t);
        }
    }
    let (t, v) = golden_max(best.1 - step, best.1 + step, tol, &mut objective)?;
    Ok(if v >= best.0 { (t, v) } else { (best.1, best.0) })
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max<F>(mut lo: f64, mut hi: f64, tol: f64, mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}
