//! Descent over density coefficients with Armijo backtracking and multi-start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::{mode_frequency, Basis, DensityParams};
use super::objective::{DensityObjective, WarmStart};
use crate::corrector::CgConfig;
use crate::error::{Error, Result};
use crate::torus_field::TorusGrid;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Descent {
    /// Steepest descent.
    Gradient,
    /// Limited-memory BFGS directions, same line search.
    #[default]
    Lbfgs,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// First variation pulled back to the coefficients.
    #[default]
    Analytic,
    /// Central differences over the coefficient vector.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    /// Modes per axis of the log-density; `None` picks 9 in 1D and 5 in 2D.
    pub cutoff: Option<usize>,
    /// Random starts in addition to `f = 1`.
    pub starts: usize,
    pub seed: u64,
    pub descent: Descent,
    pub gradient: GradientMode,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    pub fd_step: f64,
    /// Scale of the random initial coefficients.
    pub init_scale: f64,
    pub cg: CgConfig,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            cutoff: None,
            starts: 5,
            seed: 0,
            descent: Descent::Lbfgs,
            gradient: GradientMode::Analytic,
            initial_step: 0.1,
            shrink: 0.5,
            armijo: 1e-4,
            grad_tol: 1e-5,
            max_iter: 500,
            memory: 8,
            fd_step: 1e-6,
            init_scale: 0.3,
            cg: CgConfig::default(),
        }
    }
}

impl OptConfig {
    pub fn cutoff_for(&self, dim: usize) -> usize {
        self.cutoff.unwrap_or(DensityParams::default_cutoff(dim))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_step > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.grad_tol > 0.0
            && self.fd_step > 0.0
            && self.init_scale >= 0.0
            && self.cg.tol > 0.0;
        if !ok {
            return Err(Error::param("optimizer settings out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    IterationCap,
    /// No step along the search direction satisfied Armijo.
    LineSearchStalled,
    /// Objective dropped below the caller's threshold.
    BelowThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub value: f64,
    pub params: DensityParams,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    pub stop: StopReason,
    /// Index of the winning start.
    pub start: usize,
    /// Objective after each iteration of the winning start.
    pub trace: Vec<f64>,
}

impl OptResult {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::GradientTolerance | StopReason::BelowThreshold)
    }
}

/// Starting points: `f = 1`, then `extra`, then `cfg.starts` seeded random draws.
pub fn starting_points(grid: &TorusGrid, cfg: &OptConfig, extra: &[DensityParams]) -> Result<Vec<DensityParams>> {
    let dim = grid.dim();
    let m = cfg.cutoff_for(dim);
    let mut out = vec![DensityParams::uniform(dim, m)?];
    for e in extra {
        out.push(e.with_cutoff(m)?);
    }
    for s in 0..cfg.starts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(s as u64 + 1);
        let mut p = DensityParams::uniform(dim, m)?;
        for (j, c) in p.coeffs.iter_mut().enumerate().skip(1) {
            let k2: usize = if dim == 1 {
                mode_frequency(j).pow(2)
            } else {
                mode_frequency(j % m).pow(2) + mode_frequency(j / m).pow(2)
            };
            *c = cfg.init_scale * rng.random_range(-1.0..1.0) / (1.0 + k2 as f64);
        }
        out.push(p);
    }
    Ok(out)
}

struct Run<'a, O: DensityObjective> {
    basis: &'a Basis,
    objective: &'a O,
    cfg: &'a OptConfig,
    warm: WarmStart,
    evaluations: usize,
}

impl<O: DensityObjective> Run<'_, O> {
    /// Value, or `None` outside the admissible coefficient range.
    fn value(&mut self, p: &DensityParams) -> Result<Option<f64>> {
        let f = match self.basis.density(p) {
            Ok(f) => f,
            Err(Error::Parameter(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        self.evaluations += 1;
        let v = self.objective.evaluate(&f, &mut self.warm, false)?.value;
        Ok(Some(v))
    }

    fn value_and_gradient(&mut self, p: &DensityParams) -> Result<Option<(f64, Vec<f64>)>> {
        match self.cfg.gradient {
            GradientMode::Analytic => {
                let f = match self.basis.density(p) {
                    Ok(f) => f,
                    Err(Error::Parameter(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                self.evaluations += 1;
                let e = self.objective.evaluate(&f, &mut self.warm, true)?;
                let d = e.derivative.expect("derivative requested");
                Ok(Some((e.value, self.basis.pull_back(&f, &d))))
            }
            GradientMode::FiniteDifference => {
                let Some(v) = self.value(p)? else {
                    return Ok(None);
                };
                let h = self.cfg.fd_step;
                let mut g = vec![0.0; p.coeffs.len()];
                // the constant mode cancels in the normalization
                for (j, gj) in g.iter_mut().enumerate().skip(1) {
                    let mut q = p.clone();
                    q.coeffs[j] = p.coeffs[j] + h;
                    let fp = self.value(&q)?;
                    q.coeffs[j] = p.coeffs[j] - h;
                    let fm = self.value(&q)?;
                    match (fp, fm) {
                        (Some(a), Some(b)) => *gj = (a - b) / (2.0 * h),
                        _ => return Ok(None),
                    }
                }
                Ok(Some((v, g)))
            }
        }
    }

    fn descend(&mut self, start: DensityParams, stop_below: Option<f64>) -> Result<OptResult> {
        let cfg = self.cfg;
        let mut x = start;
        let (mut fx, mut g) = self
            .value_and_gradient(&x)?
            .ok_or_else(|| Error::param("starting density outside the admissible range"))?;
        if !fx.is_finite() {
            return Err(Error::Optimization {
                message: "objective is not finite at the starting point".into(),
                trace: vec![fx],
            });
        }
        let mut trace = vec![fx];
        let mut memory: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
        let mut iterations = 0;
        let stop = loop {
            let gn = norm(&g);
            if stop_below.is_some_and(|t| fx < t) {
                break StopReason::BelowThreshold;
            }
            if gn < cfg.grad_tol {
                break StopReason::GradientTolerance;
            }
            if iterations >= cfg.max_iter {
                break StopReason::IterationCap;
            }
            let quasi_newton = cfg.descent == Descent::Lbfgs && !memory.is_empty();
            let mut dir = if quasi_newton {
                two_loop(&g, &memory)
            } else {
                g.iter().map(|v| -v).collect()
            };
            let mut slope = dot(&g, &dir);
            if slope >= 0.0 {
                memory.clear();
                dir = g.iter().map(|v| -v).collect();
                slope = -gn * gn;
            }
            let mut step = if quasi_newton { 1.0 } else { cfg.initial_step };
            let mut accepted = None;
            for _ in 0..60 {
                let trial = DensityParams {
                    coeffs: x.coeffs.iter().zip(&dir).map(|(a, d)| a + step * d).collect(),
                    ..x.clone()
                };
                if let Some((ft, gt)) = self.value_and_gradient(&trial)? {
                    if ft.is_nan() {
                        trace.push(ft);
                        return Err(Error::Optimization {
                            message: "objective became NaN".into(),
                            trace,
                        });
                    }
                    if ft <= fx + cfg.armijo * step * slope {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                step *= cfg.shrink;
            }
            let Some((nx, nf, ng)) = accepted else {
                if !memory.is_empty() {
                    memory.clear();
                    continue;
                }
                break StopReason::LineSearchStalled;
            };
            let s: Vec<f64> = nx.coeffs.iter().zip(&x.coeffs).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &yv);
            if sy > 1e-14 * norm(&s) * norm(&yv) {
                memory.push((s, yv, 1.0 / sy));
                if memory.len() > cfg.memory {
                    memory.remove(0);
                }
            }
            x = nx;
            fx = nf;
            g = ng;
            iterations += 1;
            trace.push(fx);
        };
        Ok(OptResult {
            value: fx,
            params: x,
            iterations,
            evaluations: self.evaluations,
            grad_norm: norm(&g),
            stop,
            start: 0,
            trace,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// L-BFGS two-loop recursion for `-H g`.
fn two_loop(g: &[f64], memory: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; memory.len()];
    for (i, (s, y, rho)) in memory.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[i] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    let (s, y, _) = memory.last().expect("non-empty memory");
    let gamma = dot(s, y) / dot(y, y);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for (i, (s, y, rho)) in memory.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[i] - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Minimizes `objective` over densities from every starting point and keeps
/// the lowest value (ties go to the earlier start). Starts run concurrently.
///
/// With `stop_below`, a start halts as soon as its value drops under the
/// threshold.
pub fn minimize<O: DensityObjective>(
    objective: &O,
    grid: &TorusGrid,
    cfg: &OptConfig,
    starts: &[DensityParams],
    stop_below: Option<f64>,
) -> Result<OptResult> {
    cfg.validate()?;
    if starts.is_empty() {
        return Err(Error::param("no starting points"));
    }
    let m = cfg.cutoff_for(grid.dim());
    let basis = Basis::new(*grid, m)?;
    let results: Vec<Result<OptResult>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut run = Run {
                basis: &basis,
                objective,
                cfg,
                warm: WarmStart::default(),
                evaluations: 0,
            };
            run.descend(s.with_cutoff(m)?, stop_below)
                .map(|mut r| {
                    r.start = i;
                    r
                })
        })
        .collect();
    let mut best: Option<OptResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.value < b.value) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!(),
    }
}
