//! `R(a)(y) = sup{<y, lambda> : |lambda|^2 / 2 < a(lambda)}` for an even
//! function `a` with `a >= a(0)` and `lambda -> a(lambda) - |lambda|^2 / 2`
//! concave, evaluated ray by ray.
//!
//! Along `s eta` the set is the segment `[0, s*(eta))` where `s*` is the root
//! of `a(s eta) - s^2 / 2`, so `R(a)(y) = sup_eta <y, eta> s*(eta)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::extended_float;
use crate::directions::{self, golden_max, SweepConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RConfig {
    /// Interior sample directions on the half circle facing `y` (2D).
    pub angles: usize,
    pub angle_tol: f64,
    /// Relative width at which a root bisection stops.
    pub root_tol: f64,
    /// `a(0)` at or below this makes the transform `-inf`.
    pub degenerate_tol: f64,
    /// Points of the `mu` grid in the inverse check.
    pub mu_points: usize,
    /// Absolute `mu` width after refinement in the inverse check.
    pub mu_tol: f64,
    /// Sample directions of `y` in the inverse check (2D).
    pub y_angles: usize,
}

impl Default for RConfig {
    fn default() -> Self {
        Self {
            angles: 12,
            angle_tol: 1e-4,
            root_tol: 1e-10,
            degenerate_tol: 1e-10,
            mu_points: 16,
            mu_tol: 1e-7,
            y_angles: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRoot {
    pub eta: Vec<f64>,
    pub s_star: f64,
    /// `a(s eta) - s^2 / 2` was strictly decreasing over the sampled `s`.
    pub monotone: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RTransformResult {
    pub y: Vec<f64>,
    #[serde(with = "extended_float")]
    pub value: f64,
    pub direction: Option<Vec<f64>>,
    pub roots: Vec<DirectionRoot>,
    pub sigma0: f64,
}

impl RTransformResult {
    pub fn all_monotone(&self) -> bool {
        self.roots.iter().all(|r| r.monotone)
    }
}

/// Root of `a(s eta) - s^2 / 2` on `s >= sqrt(2 a(0))`.
fn ray_root<A>(a: &A, eta: &[f64], sigma0: f64, sigma_max: Option<f64>, cfg: &RConfig) -> Result<DirectionRoot>
where
    A: Fn(&[f64]) -> Result<f64>,
{
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut phi = |s: f64| -> Result<f64> {
        let lam: Vec<f64> = eta.iter().map(|e| s * e).collect();
        let v = a(&lam)? - 0.5 * s * s;
        samples.push((s, v));
        Ok(v)
    };
    // a >= a(0) puts the root at or beyond sqrt(2 a(0)); a <= sigma_max bounds it
    let mut lo = (2.0 * sigma0).sqrt();
    let mut hi = match sigma_max {
        Some(m) => (2.0 * m.max(sigma0)).sqrt(),
        None => 1.1 * lo,
    };
    if phi(lo)? < 0.0 {
        lo = 0.0;
    }
    let mut expansions = 0;
    while hi > lo && phi(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Numerical("no sign change along the ray".into()));
        }
    }
    while hi - lo > cfg.root_tol * hi {
        let mid = 0.5 * (lo + hi);
        if phi(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    samples.sort_by(|x, y| x.0.total_cmp(&y.0));
    samples.dedup_by(|x, y| x.0 == y.0);
    let monotone = samples.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(DirectionRoot {
        eta: eta.to_vec(),
        s_star: 0.5 * (lo + hi),
        monotone,
        evaluations: samples.len(),
    })
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `R(a)(y)`. `sigma_max`, when known, bounds `a` from above and fixes the
/// bisection bracket; otherwise the bracket is grown geometrically.
pub fn r_transform<A>(a: &A, y: &[f64], sigma_max: Option<f64>, cfg: &RConfig) -> Result<RTransformResult>
where
    A: Fn(&[f64]) -> Result<f64> + Sync,
{
    let dim = y.len();
    if !(dim == 1 || dim == 2) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("y must be a finite vector in R^1 or R^2"));
    }
    let sigma0 = a(&vec![0.0; dim])?;
    let mut out = RTransformResult {
        y: y.to_vec(),
        value: f64::NEG_INFINITY,
        direction: None,
        roots: Vec::new(),
        sigma0,
    };
    if sigma0 <= cfg.degenerate_tol {
        return Ok(out);
    }
    let yn = norm(y);
    if yn == 0.0 {
        out.value = 0.0;
        return Ok(out);
    }
    if dim == 1 {
        let eta = [y[0].signum()];
        let root = ray_root(a, &eta, sigma0, sigma_max, cfg)?;
        out.value = yn * root.s_star;
        out.direction = Some(eta.to_vec());
        out.roots.push(root);
        return Ok(out);
    }
    // a is even, so only directions with <y, eta> > 0 can win
    let center = y[1].atan2(y[0]);
    let half = 0.5 * std::f64::consts::PI;
    let step = 2.0 * half / (cfg.angles.max(1) + 1) as f64;
    let angles: Vec<f64> = (1..=cfg.angles.max(1)).map(|k| center - half + k as f64 * step).collect();
    let coarse: Vec<Result<DirectionRoot>> = angles
        .par_iter()
        .map(|&t| ray_root(a, &directions::unit(t), sigma0, sigma_max, cfg))
        .collect();
    let score = |r: &DirectionRoot| (r.eta[0] * y[0] + r.eta[1] * y[1]) * r.s_star;
    let mut best = (f64::NEG_INFINITY, center);
    for (t, r) in angles.iter().zip(coarse) {
        let r = r?;
        let v = score(&r);
        if v > best.0 {
            best = (v, *t);
        }
        out.roots.push(r);
    }
    let mut refined = Vec::new();
    let (t, v) = golden_max(best.1 - step, best.1 + step, cfg.angle_tol, |t| {
        let r = ray_root(a, &directions::unit(t), sigma0, sigma_max, cfg)?;
        let v = score(&r);
        refined.push(r);
        Ok(v)
    })?;
    out.roots.extend(refined);
    let (value, angle) = if v >= best.0 { (v, t) } else { best };
    out.value = value;
    out.direction = Some(directions::unit(angle).to_vec());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseRCheck {
    pub lambda: Vec<f64>,
    pub c: f64,
    /// `sup{-mu : -mu < c, <lambda, y> <= R(a + mu)(y) for all y}`.
    pub recovered: f64,
    /// Smallest feasible `mu` found, if the threshold lies above `-c`.
    pub mu_star: Option<f64>,
    pub grid_spacing: f64,
    pub transforms: usize,
}

/// Recovers `min(a(lambda) - |lambda|^2 / 2, c)` from R-transforms of the
/// shifted functions `a + mu`.
///
/// Feasibility of `mu` is monotone, and `mu = |lambda|^2 / 2 - a(0)` is
/// always feasible, so a grid on `(-c, |lambda|^2 / 2 - a(0)]` brackets the
/// threshold, which bisection then refines to `mu_tol`.
pub fn inverse_r_check<A>(
    a: &A,
    lambda: &[f64],
    c: f64,
    sigma_max: Option<f64>,
    cfg: &RConfig,
) -> Result<InverseRCheck>
where
    A: Fn(&[f64]) -> Result<f64> + Sync,
{
    let dim = lambda.len();
    let sigma0 = a(&vec![0.0; dim])?;
    if !(c <= sigma0 + 1e-12) {
        return Err(Error::param(format!("c = {c} exceeds a(0) = {sigma0}")));
    }
    if cfg.mu_points < 2 {
        return Err(Error::Resolution("the mu grid needs at least two points".into()));
    }
    let l2: f64 = lambda.iter().map(|x| x * x).sum();
    let top = 0.5 * l2 - sigma0;
    let mut transforms = 0;
    let mut out = InverseRCheck {
        lambda: lambda.to_vec(),
        c,
        recovered: c,
        mu_star: None,
        grid_spacing: 0.0,
        transforms: 0,
    };
    if top <= -c {
        return Ok(out);
    }
    // min over unit y of R(a + mu)(y) - <lambda, y>
    let mut slack = |mu: f64| -> Result<f64> {
        let shifted = |l: &[f64]| -> Result<f64> { Ok(a(l)? + mu) };
        let smax = sigma_max.map(|m| m + mu);
        let mut eval = |y: &[f64]| -> Result<f64> {
            transforms += 1;
            let r = r_transform(&shifted, y, smax, cfg)?.value;
            Ok(r - lambda.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        };
        if dim == 1 {
            Ok(eval(&[1.0])?.min(eval(&[-1.0])?))
        } else {
            let sweep = SweepConfig {
                angles: cfg.y_angles.max(3),
                angle_tol: cfg.angle_tol,
            };
            let best = directions::maximize(2, &sweep, |y| Ok(Some(-eval(y)?)))?;
            Ok(-best.value)
        }
    };
    let feasible_tol = 1e-9 * (1.0 + l2.sqrt());
    let h = (top + c) / cfg.mu_points as f64;
    out.grid_spacing = h;
    let mut first = None;
    for k in 1..=cfg.mu_points {
        let mu = -c + k as f64 * h;
        if slack(mu)? >= -feasible_tol {
            first = Some(k);
            break;
        }
    }
    let Some(k) = first else {
        return Err(Error::Resolution(format!(
            "no feasible mu on a grid of {} points up to {top}",
            cfg.mu_points
        )));
    };
    let (mut lo, mut hi) = (-c + (k - 1) as f64 * h, -c + k as f64 * h);
    while hi - lo > cfg.mu_tol {
        let mid = 0.5 * (lo + hi);
        if slack(mid)? >= -feasible_tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    out.mu_star = Some(hi);
    out.recovered = c.min(-hi);
    out.transforms = transforms;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzPair {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub difference: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// `sup{|lambda| : a(lambda) - |lambda|^2 / 2 > 0}`, the largest root radius.
    pub constant: f64,
    pub pairs: Vec<LipschitzPair>,
    pub all_hold: bool,
}

/// Checks `|R(a)(y1) - R(a)(y2)| <= C |y1 - y2|` on the given pairs.
pub fn lipschitz_check<A>(
    a: &A,
    pairs: &[(Vec<f64>, Vec<f64>)],
    sigma_max: Option<f64>,
    cfg: &RConfig,
) -> Result<LipschitzReport>
where
    A: Fn(&[f64]) -> Result<f64> + Sync,
{
    let Some(dim) = pairs.first().map(|p| p.0.len()) else {
        return Ok(LipschitzReport {
            constant: 0.0,
            pairs: Vec::new(),
            all_hold: true,
        });
    };
    let sigma0 = a(&vec![0.0; dim])?;
    let constant = if dim == 1 {
        let p = ray_root(a, &[1.0], sigma0, sigma_max, cfg)?.s_star;
        let m = ray_root(a, &[-1.0], sigma0, sigma_max, cfg)?.s_star;
        p.max(m)
    } else {
        let sweep = SweepConfig {
            angles: 2 * cfg.angles.max(2),
            angle_tol: cfg.angle_tol,
        };
        directions::maximize(2, &sweep, |eta| Ok(Some(ray_root(a, eta, sigma0, sigma_max, cfg)?.s_star)))?.value
    };
    let mut out = Vec::new();
    for (y1, y2) in pairs {
        let r1 = r_transform(a, y1, sigma_max, cfg)?.value;
        let r2 = r_transform(a, y2, sigma_max, cfg)?.value;
        let dy = norm(&y1.iter().zip(y2).map(|(p, q)| p - q).collect::<Vec<_>>());
        let difference = (r1 - r2).abs();
        let bound = constant * dy;
        out.push(LipschitzPair {
            y1: y1.clone(),
            y2: y2.clone(),
            difference,
            bound,
            holds: difference <= bound + 1e-8 * (1.0 + r1.abs().max(r2.abs())),
        });
    }
    Ok(LipschitzReport {
        constant,
        all_hold: out.iter().all(|p| p.holds),
        pairs: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{realize, PotentialSpec};
    use crate::spectral::{EigConfig, SigmaCache};
    use crate::torus_field::TorusGrid;

    fn constant(v: f64) -> impl Fn(&[f64]) -> Result<f64> + Sync {
        move |_| Ok(v)
    }

    #[test]
    fn constant_function_transform() {
        let cfg = RConfig::default();
        let r = r_transform(&constant(0.5), &[1.0], Some(0.5), &cfg).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
        let r = r_transform(&constant(2.0), &[-3.0], None, &cfg).unwrap();
        assert!((r.value - 6.0).abs() < 1e-8);
        let y = [0.6, -0.8];
        let r = r_transform(&constant(0.5), &y, Some(0.5), &cfg).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
        let d = r.direction.as_ref().unwrap();
        assert!((d[0] - 0.6).abs() < 1e-3 && (d[1] + 0.8).abs() < 1e-3);
        assert!(r.all_monotone());
    }

    #[test]
    fn degenerate_gives_negative_infinity() {
        let r = r_transform(&constant(0.0), &[1.0], None, &RConfig::default()).unwrap();
        assert_eq!(r.value, f64::NEG_INFINITY);
        let s = serde_json::to_string(&r).unwrap();
        let back: RTransformResult = serde_json::from_str(&s).unwrap();
        assert_eq!(back.value, f64::NEG_INFINITY);
    }

    #[test]
    fn anisotropic_quadratic() {
        // a - |l|^2/2 = 1 - l_1^2 / 4 - 3 l_2^2 / 8 is positive on an ellipse
        // with semi-axes 2 and sqrt(8/3), whose support function is
        // sqrt(4 y_1^2 + 8/3 y_2^2)
        let a = |l: &[f64]| -> Result<f64> { Ok(1.0 + l[0] * l[0] / 4.0 + l[1] * l[1] / 8.0) };
        let cfg = RConfig::default();
        for y in [[1.0f64, 0.0], [0.0, 1.0], [0.6, 0.8], [-1.0, 2.0]] {
            let exact = (4.0 * y[0] * y[0] + 8.0 / 3.0 * y[1] * y[1]).sqrt();
            let r = r_transform(&a, &y, None, &cfg).unwrap();
            assert!((r.value - exact).abs() < 1e-7 * exact, "{y:?}: {} vs {exact}", r.value);
        }
    }

    #[test]
    fn inverse_recovers_constant() {
        let v = 0.8;
        let cfg = RConfig::default();
        let r = inverse_r_check(&constant(v), &[0.0], v / 2.0, Some(v), &cfg).unwrap();
        assert!((r.recovered - v / 2.0).abs() <= cfg.mu_tol);
        let lam = (v / 2.0f64).sqrt();
        let r = inverse_r_check(&constant(v), &[lam], v, Some(v), &cfg).unwrap();
        assert!((r.recovered - 0.75 * v).abs() <= 2.0 * cfg.mu_tol, "{}", r.recovered);
        assert!(inverse_r_check(&constant(v), &[0.0], 2.0 * v, Some(v), &cfg).is_err());
        let coarse = RConfig { mu_points: 1, ..cfg };
        assert!(matches!(
            inverse_r_check(&constant(v), &[lam], v, Some(v), &coarse),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn inverse_recovers_spectral_sigma() {
        let g = TorusGrid::line(64, 1.0).unwrap();
        let v = realize(&PotentialSpec::cosine(1.0), &g).unwrap();
        let vmax = v.v_max();
        let cache = SigmaCache::new(v, EigConfig::default());
        let a = |l: &[f64]| cache.sigma(l);
        let lam = 0.3;
        let direct = a(&[lam]).unwrap() - lam * lam / 2.0;
        let c = a(&[0.0]).unwrap();
        let r = inverse_r_check(&a, &[lam], c, Some(vmax), &RConfig::default()).unwrap();
        assert!((r.recovered - direct.min(c)).abs() < 1e-5, "{} vs {direct}", r.recovered);
    }

    #[test]
    fn lipschitz_constant_for_constant_function() {
        let v = 0.5;
        let pairs = vec![
            (vec![1.0], vec![2.0]),
            (vec![1.0], vec![-1.0]),
            (vec![0.3], vec![0.3]),
        ];
        let rep = lipschitz_check(&constant(v), &pairs, Some(v), &RConfig::default()).unwrap();
        assert!((rep.constant - 1.0).abs() < 1e-9);
        assert!(rep.all_hold);
        assert!((rep.pairs[0].difference - rep.pairs[0].bound).abs() < 1e-8);
        assert_eq!(rep.pairs[2].difference, 0.0);
    }
}
