//! Feynman-Kac simulation of Brownian motion killed at rate `V`.
//!
//! Every path draws from its own ChaCha8 stream, selected by the path index,
//! and path weights are reduced in log-space by a fixed pairwise tree, so
//! results do not depend on how rayon schedules the paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{density, DensityParams};
use crate::potential::PotentialField;
use crate::torus_field::{partial, DiffMethod, ScalarField};

/// Number of equal batches behind every standard error.
pub const BATCHES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub npaths: usize,
    pub t_horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeEnergyRun {
    pub t_horizon: f64,
    pub dt: f64,
    pub npaths: usize,
    pub seed: u64,
}

impl Default for FreeEnergyRun {
    fn default() -> Self {
        Self {
            t_horizon: 20.0,
            dt: 1e-3,
            npaths: 10_000,
            seed: 0,
        }
    }
}

fn rng_for(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln sum exp(x)` by a balanced binary tree over the index order.
fn pairwise_log_sum(x: &[f64]) -> f64 {
    match x.len() {
        0 => f64::NEG_INFINITY,
        1 => x[0],
        n => log_add(pairwise_log_sum(&x[..n / 2]), pairwise_log_sum(&x[n / 2..])),
    }
}

/// Log of the mean weight and its standard error from batch means.
fn log_mean(logw: &[f64]) -> Result<(f64, f64)> {
    let n = logw.len();
    let total = pairwise_log_sum(logw) - (n as f64).ln();
    if !total.is_finite() {
        return Err(Error::Underflow(
            "every path weight is zero; raise the potential floor or shorten the horizon".into(),
        ));
    }
    let size = n / BATCHES;
    let ratios: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let chunk = &logw[b * size..(b + 1) * size];
            (pairwise_log_sum(chunk) - (size as f64).ln() - total).exp()
        })
        .collect();
    let m = ratios.iter().sum::<f64>() / BATCHES as f64;
    let var = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    // delta method: sd(ln M) = sd(M) / M, and the ratios are already M-scaled
    Ok((total, (var / BATCHES as f64).sqrt()))
}

/// `(1/t) ln E[exp(-int_0^t V(Z_s) ds)]` for `dZ = lambda dt + dB` started
/// uniformly on the torus, which tends to the principal eigenvalue
/// `Lambda(lambda)`.
pub fn mc_free_energy(v: &PotentialField, lambda: &[f64], run: &FreeEnergyRun) -> Result<McEstimate> {
    let grid = *v.grid();
    let dim = grid.dim();
    if lambda.len() != dim || lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::param("lambda must be a finite vector of the grid dimension"));
    }
    if !(run.t_horizon >= 10.0 && run.t_horizon.is_finite()) {
        return Err(Error::param("the horizon must be at least 10"));
    }
    if !(run.dt > 0.0 && run.dt <= 1e-2) {
        return Err(Error::param("dt must lie in (0, 1e-2]"));
    }
    if run.npaths < 1000 {
        return Err(Error::param("at least 1000 paths are needed"));
    }
    let steps = (run.t_horizon / run.dt).round() as usize;
    let dt = run.t_horizon / steps as f64;
    let sq = dt.sqrt();
    let field = v.field();
    let periods = grid.periods().to_vec();
    let npaths = run.npaths - run.npaths % BATCHES;
    let logw: Vec<f64> = (0..npaths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_for(run.seed, p);
            let mut x = [0.0; 2];
            for (xa, per) in x.iter_mut().zip(&periods) {
                *xa = rng.random::<f64>() * per;
            }
            let mut vprev = field.interpolate(x);
            let mut acc = 0.0;
            for _ in 0..steps {
                for a in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    x[a] += lambda[a] * dt + sq * z;
                }
                let vn = field.interpolate(x);
                acc += 0.5 * (vprev + vn);
                vprev = vn;
            }
            -acc * dt
        })
        .collect();
    let (lm, se) = log_mean(&logw)?;
    Ok(McEstimate {
        value: lm / run.t_horizon,
        stderr: se / run.t_horizon,
        npaths,
        t_horizon: run.t_horizon,
        dt,
        seed: run.seed,
    })
}

/// Drift `b = f' / (2 f) + a phi / f` with the constant 1D flux `phi = direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiltSpec {
    pub density: DensityParams,
    /// `+1` or `-1`.
    pub direction: f64,
    pub a: f64,
}

impl TiltSpec {
    /// Uniform density, constant flux towards the target, speed `a`.
    pub fn uniform(a: f64) -> Self {
        Self {
            density: DensityParams::uniform(1, DensityParams::default_cutoff(1)).expect("valid cutoff"),
            direction: 1.0,
            a,
        }
    }

    pub fn drift(&self, v: &PotentialField) -> Result<ScalarField> {
        if v.grid().dim() != 1 {
            return Err(Error::param("tilts are one-dimensional"));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::param("the tilt speed a must be positive"));
        }
        if self.direction.abs() != 1.0 {
            return Err(Error::param("the flux direction must be +1 or -1"));
        }
        let f = density(&self.density, v.grid())?;
        let df = partial(&f, 0, DiffMethod::Spectral);
        let b = df.zip_map(&f, |d, fv| d / (2.0 * fv)).zip_map(&f, |b, fv| b + self.a * self.direction / fv);
        if b.values().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("tilt drift is not finite".into()));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalRun {
    pub r_list: Vec<f64>,
    pub npaths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Paths still running at this time contribute zero.
    pub t_max: f64,
    /// Paths whose log weight falls below this stop and contribute zero.
    pub log_cutoff: f64,
    pub min_survivors: usize,
}

impl Default for SurvivalRun {
    fn default() -> Self {
        Self {
            r_list: vec![4.0, 6.0, 8.0, 10.0],
            npaths: 10_000,
            dt: 1e-3,
            seed: 0,
            t_max: 1000.0,
            log_cutoff: -60.0,
            min_survivors: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub r: f64,
    /// Estimate of `E_{-r}[exp(-int_0^H V)]`, `H` the hitting time of `[-1, 1]`.
    pub log_e: f64,
    pub stderr_log: f64,
    /// Sample variance of the weight divided by the squared mean.
    pub relative_variance: f64,
    pub survivors: usize,
    pub capped: usize,
    pub truncated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalFit {
    /// Least-squares slope of `-ln e(-r)` against `r`.
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<SurvivalPoint>,
    pub tilted: bool,
    pub npaths: usize,
    pub dt: f64,
    pub seed: u64,
}

enum PathEnd {
    Hit(f64),
    Capped,
    Truncated,
}

/// Decay rate of survival probabilities in 1D from walks started at `-r`.
///
/// With a tilt the walk follows `dZ = b(Z) dt + dW` and carries the exact
/// likelihood ratio `exp(-b dW - b^2 dt / 2)` of each Euler step. Crossings
/// of `-1` between grid times are detected with the Brownian bridge
/// probability.
pub fn mc_survival_decay_1d(v: &PotentialField, run: &SurvivalRun, tilt: Option<&TiltSpec>) -> Result<SurvivalFit> {
    if v.grid().dim() != 1 {
        return Err(Error::param("survival decay is one-dimensional"));
    }
    if run.r_list.len() < 2 {
        return Err(Error::param("the fit needs at least two radii"));
    }
    if run.r_list.windows(2).any(|w| w[1] <= w[0]) || run.r_list[0] <= 1.0 || run.r_list[run.r_list.len() - 1] > 10.0 {
        return Err(Error::param("radii must increase within (1, 10]"));
    }
    if !(run.dt > 0.0 && run.dt <= 1e-2) || !(run.t_max > 0.0) || !(run.log_cutoff < 0.0) {
        return Err(Error::param("need 0 < dt <= 1e-2, t_max > 0 and a negative log cutoff"));
    }
    if run.npaths < BATCHES * 10 {
        return Err(Error::param("too few paths"));
    }
    let drift = tilt.map(|t| t.drift(v)).transpose()?;
    let field = v.field();
    let dt = run.dt;
    let sq = dt.sqrt();
    let max_steps = (run.t_max / dt).ceil() as usize;
    let npaths = run.npaths - run.npaths % BATCHES;
    let walk = |r: f64, p: usize| -> PathEnd {
        let mut rng = rng_for(run.seed, p);
        let mut x = -r;
        let mut vprev = field.interpolate([x, 0.0]);
        let mut logw = 0.0;
        for _ in 0..max_steps {
            let b = drift.as_ref().map_or(0.0, |d| d.interpolate([x, 0.0]));
            let dw = sq * rng.sample::<f64, _>(StandardNormal);
            let xn = x + b * dt + dw;
            let vn = field.interpolate([xn, 0.0]);
            logw -= 0.5 * (vprev + vn) * dt;
            if drift.is_some() {
                logw -= b * dw + 0.5 * b * b * dt;
            }
            let u: f64 = rng.random();
            let hit = xn >= -1.0 || u < (-2.0 * (-1.0 - x) * (-1.0 - xn) / dt).exp();
            if hit {
                return PathEnd::Hit(logw);
            }
            if logw < run.log_cutoff {
                return PathEnd::Truncated;
            }
            x = xn;
            vprev = vn;
        }
        PathEnd::Capped
    };
    let mut points = Vec::with_capacity(run.r_list.len());
    for &r in &run.r_list {
        let ends: Vec<PathEnd> = (0..npaths).into_par_iter().map(|p| walk(r, p)).collect();
        let mut logw = Vec::with_capacity(npaths);
        let (mut survivors, mut capped, mut truncated) = (0, 0, 0);
        for e in &ends {
            logw.push(match e {
                PathEnd::Hit(w) => {
                    survivors += 1;
                    *w
                }
                PathEnd::Capped => {
                    capped += 1;
                    f64::NEG_INFINITY
                }
                PathEnd::Truncated => {
                    truncated += 1;
                    f64::NEG_INFINITY
                }
            });
        }
        let (lm, se) = log_mean(&logw)?;
        let second = pairwise_log_sum(&logw.iter().map(|w| 2.0 * w).collect::<Vec<_>>()) - (npaths as f64).ln();
        points.push(SurvivalPoint {
            r,
            log_e: lm,
            stderr_log: se,
            relative_variance: ((second - 2.0 * lm).exp() - 1.0).max(0.0),
            survivors,
            capped,
            truncated,
        });
    }
    let n = points.len() as f64;
    let mr = points.iter().map(|p| p.r).sum::<f64>() / n;
    let my = points.iter().map(|p| -p.log_e).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.r - mr) * (-p.log_e - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.r - mr).powi(2)).sum();
    let slope = sxy / sxx;
    let fit = SurvivalFit {
        slope,
        intercept: my - slope * mr,
        points,
        tilted: tilt.is_some(),
        npaths,
        dt,
        seed: run.seed,
    };
    let last = fit.points.last().expect("at least two radii");
    if last.survivors < run.min_survivors {
        return Err(Error::StatisticalValidity(format!(
            "{} surviving paths at r = {} (partial fit slope {:.6})",
            last.survivors, last.r, fit.slope
        )));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{realize, PotentialSpec};
    use crate::torus_field::TorusGrid;

    fn constant(v: f64) -> PotentialField {
        realize(&PotentialSpec::constant(v), &TorusGrid::line(32, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn pairwise_sum_matches_direct() {
        let x: Vec<f64> = (0..37).map(|i| -(i as f64) * 0.3).collect();
        let direct = x.iter().map(|v| v.exp()).sum::<f64>().ln();
        assert!((pairwise_log_sum(&x) - direct).abs() < 1e-13);
        assert_eq!(pairwise_log_sum(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!(matches!(log_mean(&[f64::NEG_INFINITY; 20]), Err(Error::Underflow(_))));
    }

    #[test]
    fn constant_free_energy_is_deterministic_weight() {
        let run = FreeEnergyRun {
            t_horizon: 10.0,
            dt: 1e-2,
            npaths: 1000,
            seed: 3,
        };
        let e = mc_free_energy(&constant(0.4), &[0.0], &run).unwrap();
        assert!((e.value + 0.4).abs() < 1e-12);
        assert!(e.stderr < 1e-12);
    }

    #[test]
    fn same_seed_same_bits() {
        let g = TorusGrid::line(32, 1.0).unwrap();
        let v = realize(&PotentialSpec::cosine(1.0), &g).unwrap();
        let run = FreeEnergyRun {
            t_horizon: 10.0,
            dt: 1e-2,
            npaths: 1000,
            seed: 11,
        };
        let a = mc_free_energy(&v, &[0.2], &run).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_free_energy(&v, &[0.2], &run)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        let c = mc_free_energy(&v, &[0.2], &FreeEnergyRun { seed: 12, ..run }).unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn preconditions() {
        let v = constant(0.4);
        let bad = FreeEnergyRun { dt: 0.1, ..Default::default() };
        assert!(mc_free_energy(&v, &[0.0], &bad).is_err());
        let bad = FreeEnergyRun { t_horizon: 5.0, ..Default::default() };
        assert!(mc_free_energy(&v, &[0.0], &bad).is_err());
        let run = SurvivalRun { r_list: vec![4.0, 3.0], ..Default::default() };
        assert!(mc_survival_decay_1d(&v, &run, None).is_err());
        let run = SurvivalRun { r_list: vec![4.0, 12.0], ..Default::default() };
        assert!(mc_survival_decay_1d(&v, &run, None).is_err());
        assert!(TiltSpec::uniform(-1.0).drift(&v).is_err());
    }

    #[test]
    fn perfect_tilt_for_constant_potential() {
        // with b = sqrt(2v) the weight is nearly path independent
        let v = 0.5;
        let run = SurvivalRun {
            npaths: 1000,
            dt: 1e-2,
            ..Default::default()
        };
        let fit = mc_survival_decay_1d(&constant(v), &run, Some(&TiltSpec::uniform((2.0 * v).sqrt()))).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.05, "{}", fit.slope);
        assert!(fit.points.iter().all(|p| p.relative_variance < 0.1));
    }

    #[test]
    fn too_few_survivors_is_reported() {
        let run = SurvivalRun {
            npaths: 200,
            dt: 1e-2,
            min_survivors: 1000,
            r_list: vec![2.0, 3.0],
            ..Default::default()
        };
        assert!(matches!(
            mc_survival_decay_1d(&constant(0.5), &run, None),
            Err(Error::StatisticalValidity(_))
        ));
    }
}
