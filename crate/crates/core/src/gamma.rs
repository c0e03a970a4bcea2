//! The decay rate `Gamma_V(y)` along three variational routes:
//!
//! * root: the unique `l >= 0` with `mbar(l) = inf_f {2K - l^2 J} = 0`, by bisection;
//! * inf-sup: `inf_f [2 K(f) sup_eta <y, eta>^2 / H(eta, f)]^{1/2}`;
//! * sup-inf: `sup_eta inf_f [2 K(f) <y, eta>^2 / H(eta, f)]^{1/2}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::directions::maximize_arc;
use crate::error::{Error, Result};
use crate::functionals::{
    minimize, starting_points, DensityParams, DirectionObjective, InfSupObjective, MbarObjective,
    OptConfig, OptResult,
};
use crate::potential::{averaged, realize, PotentialField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaConfig {
    pub opt: OptConfig,
    /// Relative bracket width at which bisection stops.
    pub root_tol: f64,
    /// `mbar(0)` at or below this counts as `sigma(0) = 0`.
    pub degenerate_tol: f64,
    /// Interior sample angles on the half circle for the sup-inf route (2D).
    pub supinf_angles: usize,
    pub angle_tol: f64,
    /// Route disagreement above which the computation is repeated on a
    /// refined grid with two more modes per axis.
    pub refine_threshold: f64,
    pub refine: bool,
}

impl Default for GammaConfig {
    fn default() -> Self {
        Self {
            opt: OptConfig::default(),
            root_tol: 1e-4,
            degenerate_tol: 1e-10,
            supinf_angles: 12,
            angle_tol: 1e-3,
            refine_threshold: 0.05,
            refine: true,
        }
    }
}

fn y_norm(y: &[f64], dim: usize) -> Result<f64> {
    if y.len() != dim || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(format!("y must be a finite vector in R^{dim}")));
    }
    Ok(y.iter().map(|v| v * v).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootResult {
    pub value: f64,
    /// Final bracket `[lo, hi]` with `mbar(lo) > 0 >= mbar(hi)`.
    pub bracket: [f64; 2],
    pub mbar_zero: f64,
    pub mbar_lo: f64,
    pub mbar_hi: f64,
    pub steps: usize,
    pub evaluations: usize,
    pub params: DensityParams,
}

/// Bisection for the root of `mbar` on `[0, |y| sqrt(2 v_max)]`.
///
/// Each step only needs the sign of `mbar(l)`; the descent stops as soon as
/// it sees a negative value, and is warm-started from the previous minimizer.
pub fn gamma_root(v: &PotentialField, y: &[f64], cfg: &GammaConfig) -> Result<RootResult> {
    let dim = v.grid().dim();
    let yn = y_norm(y, dim)?;
    let m = cfg.opt.cutoff_for(dim);
    if yn == 0.0 {
        return Ok(RootResult {
            value: 0.0,
            bracket: [0.0, 0.0],
            mbar_zero: f64::NAN,
            mbar_lo: f64::NAN,
            mbar_hi: f64::NAN,
            steps: 0,
            evaluations: 0,
            params: DensityParams::uniform(dim, m)?,
        });
    }
    let run = |l: f64, starts: &[DensityParams], stop: Option<f64>| -> Result<OptResult> {
        let obj = MbarObjective::new(v, y, l, cfg.opt.cg);
        minimize(&obj, v.grid(), &cfg.opt, starts, stop)
    };
    let zero = run(0.0, &starting_points(v.grid(), &cfg.opt, &[])?, None)?;
    let mut evaluations = zero.evaluations;
    if zero.value <= cfg.degenerate_tol {
        return Err(Error::DegenerateSigma(0.5 * zero.value));
    }
    let mut lo = 0.0;
    let mut hi = yn * (2.0 * v.v_max()).sqrt();
    let mut mbar_lo = zero.value;
    // f = 1 certifies mbar(hi) <= 2 E[V] - 2 v_max <= 0
    let mut mbar_hi = 2.0 * v.v_mean() - 2.0 * v.v_max();
    let mut warm = zero.params.clone();
    let mut best_hi = DensityParams::uniform(dim, m)?;
    let mut steps = 0;
    while hi - lo > cfg.root_tol * hi {
        let mid = 0.5 * (lo + hi);
        let starts = [DensityParams::uniform(dim, m)?, warm.clone()];
        let r = run(mid, &starts, Some(0.0))?;
        evaluations += r.evaluations;
        if r.value <= 0.0 {
            hi = mid;
            mbar_hi = r.value;
            best_hi = r.params.clone();
        } else {
            lo = mid;
            mbar_lo = r.value;
        }
        warm = r.params;
        steps += 1;
        if steps > 200 {
            return Err(Error::Numerical("bisection did not shrink the bracket".into()));
        }
    }
    Ok(RootResult {
        value: 0.5 * (lo + hi),
        bracket: [lo, hi],
        mbar_zero: zero.value,
        mbar_lo,
        mbar_hi,
        steps,
        evaluations,
        params: best_hi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteValue {
    pub value: f64,
    pub params: DensityParams,
    /// Maximizing direction (sup-inf route only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub direction: Option<Vec<f64>>,
    pub evaluations: usize,
    pub converged: bool,
}

/// `inf_f [2 K(f) sup_eta <y, eta>^2 / H(eta, f)]^{1/2}`, with the inner
/// supremum in closed form `y^T A(f)^{-1} y`.
pub fn gamma_infsup(v: &PotentialField, y: &[f64], opt: &OptConfig) -> Result<RouteValue> {
    let dim = v.grid().dim();
    if y_norm(y, dim)? == 0.0 {
        return Ok(RouteValue {
            value: 0.0,
            params: DensityParams::uniform(dim, opt.cutoff_for(dim))?,
            direction: None,
            evaluations: 0,
            converged: true,
        });
    }
    let obj = InfSupObjective::new(v, y, opt.cg);
    let r = minimize(&obj, v.grid(), opt, &starting_points(v.grid(), opt, &[])?, None)?;
    Ok(RouteValue {
        value: r.value.max(0.0).sqrt(),
        converged: r.converged(),
        params: r.params,
        direction: None,
        evaluations: r.evaluations,
    })
}

/// `sup_eta inf_f [2 K(f) <y, eta>^2 / H(eta, f)]^{1/2}`.
///
/// `H(-eta, f) = H(eta, f)`, so only the half circle facing `y` is searched;
/// the inner infimum at each direction is warm-started from the previous one.
pub fn gamma_supinf(v: &PotentialField, y: &[f64], cfg: &GammaConfig) -> Result<RouteValue> {
    let dim = v.grid().dim();
    let opt = &cfg.opt;
    let m = opt.cutoff_for(dim);
    let yn = y_norm(y, dim)?;
    if yn == 0.0 {
        return Ok(RouteValue {
            value: 0.0,
            params: DensityParams::uniform(dim, m)?,
            direction: None,
            evaluations: 0,
            converged: true,
        });
    }
    let inner = |eta: &[f64], extra: &[DensityParams]| -> Result<OptResult> {
        let obj = DirectionObjective::new(v, y, eta, opt.cg);
        minimize(&obj, v.grid(), opt, &starting_points(v.grid(), opt, extra)?, None)
    };
    if dim == 1 {
        let eta = [y[0].signum()];
        let r = inner(&eta, &[])?;
        return Ok(RouteValue {
            value: r.value.sqrt(),
            converged: r.converged(),
            params: r.params,
            direction: Some(eta.to_vec()),
            evaluations: r.evaluations,
        });
    }
    let quiet = OptConfig { starts: 0, ..*opt };
    let mut warm: Option<DensityParams> = None;
    let mut evaluations = 0;
    let mut best: Option<(f64, OptResult)> = None;
    let center = y[1].atan2(y[0]);
    let half = 0.5 * std::f64::consts::PI;
    let (angle, value) = maximize_arc(center, half, cfg.supinf_angles, cfg.angle_tol, |t| {
        let eta = [t.cos(), t.sin()];
        let extra: Vec<DensityParams> = warm.iter().cloned().collect();
        let obj = DirectionObjective::new(v, y, &eta, opt.cg);
        let r = minimize(&obj, v.grid(), &quiet, &starting_points(v.grid(), &quiet, &extra)?, None)?;
        evaluations += r.evaluations;
        warm = Some(r.params.clone());
        let val = r.value.sqrt();
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, r));
        }
        Ok(val)
    })?;
    let eta = [angle.cos(), angle.sin()];
    // polish the winning direction with the full multi-start
    let (_, b) = best.expect("at least one direction evaluated");
    let polished = inner(&eta, &[b.params.clone()])?;
    evaluations += polished.evaluations;
    let value = polished.value.sqrt().min(value);
    Ok(RouteValue {
        value,
        converged: polished.converged(),
        params: polished.params,
        direction: Some(eta.to_vec()),
        evaluations,
    })
}

/// All three variational routes at one `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaResult {
    pub y: Vec<f64>,
    pub value_root: f64,
    pub value_infsup: f64,
    pub value_supinf: f64,
    /// `|infsup - supinf| / infsup`.
    pub minimax_gap: f64,
    pub root_infsup_gap: f64,
    pub root_supinf_gap: f64,
    /// `infsup >= supinf - tol`.
    pub weak_duality: bool,
    pub refined: bool,
    pub best_params: DensityParams,
    pub root: RootResult,
    pub supinf_direction: Option<Vec<f64>>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl GammaResult {
    pub fn max_gap(&self) -> f64 {
        self.minimax_gap.max(self.root_infsup_gap).max(self.root_supinf_gap)
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn gamma_once(v: &PotentialField, y: &[f64], cfg: &GammaConfig) -> Result<GammaResult> {
    let root = gamma_root(v, y, cfg)?;
    let infsup = gamma_infsup(v, y, &cfg.opt)?;
    let supinf = gamma_supinf(v, y, cfg)?;
    let minimax_gap = if infsup.value > 0.0 {
        (infsup.value - supinf.value).abs() / infsup.value
    } else {
        0.0
    };
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("root_steps".into(), root.steps as f64);
    diagnostics.insert("root_evaluations".into(), root.evaluations as f64);
    diagnostics.insert("infsup_evaluations".into(), infsup.evaluations as f64);
    diagnostics.insert("supinf_evaluations".into(), supinf.evaluations as f64);
    diagnostics.insert("infsup_converged".into(), infsup.converged as u8 as f64);
    diagnostics.insert("supinf_converged".into(), supinf.converged as u8 as f64);
    diagnostics.insert("grid_n".into(), v.grid().n() as f64);
    diagnostics.insert("cutoff".into(), cfg.opt.cutoff_for(v.grid().dim()) as f64);
    Ok(GammaResult {
        y: y.to_vec(),
        value_root: root.value,
        value_infsup: infsup.value,
        value_supinf: supinf.value,
        minimax_gap,
        root_infsup_gap: rel_gap(root.value, infsup.value),
        root_supinf_gap: rel_gap(root.value, supinf.value),
        weak_duality: infsup.value >= supinf.value - 1e-6 * infsup.value.max(1.0),
        refined: false,
        best_params: infsup.params,
        root,
        supinf_direction: supinf.direction,
        diagnostics,
    })
}

/// Runs the three routes; if any two disagree by more than
/// `refine_threshold`, reruns once on the refined grid with two more modes.
pub fn gamma(v: &PotentialField, y: &[f64], cfg: &GammaConfig) -> Result<GammaResult> {
    let first = gamma_once(v, y, cfg)?;
    if !cfg.refine || first.max_gap() <= cfg.refine_threshold {
        return Ok(first);
    }
    let Some(spec) = v.spec() else {
        return Ok(first);
    };
    let grid = v.grid().refined();
    let fine = realize(spec, &grid)?;
    let m = cfg.opt.cutoff_for(grid.dim()) + 2;
    let cfg2 = GammaConfig {
        opt: OptConfig {
            cutoff: Some(m),
            ..cfg.opt
        },
        ..*cfg
    };
    let mut second = gamma_once(&fine, y, &cfg2)?;
    second.refined = true;
    second
        .diagnostics
        .insert("unrefined_max_gap".into(), first.max_gap());
    Ok(second)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub y: Vec<f64>,
    pub gamma_v: f64,
    pub gamma_ev: f64,
    /// `|y| sqrt(2 E[V])`.
    pub closed_form: f64,
    /// `gamma_v <= gamma_ev (1 + 1e-3)`.
    pub inequality_holds: bool,
    /// `gamma_ev` within 1% of the closed form.
    pub closed_form_ok: bool,
    pub gap: f64,
}

/// `Gamma_V(y)` against the decay rate of the averaged potential.
pub fn compare_average(v: &PotentialField, y: &[f64], cfg: &GammaConfig) -> Result<Comparison> {
    let yn = y_norm(y, v.grid().dim())?;
    let gv = gamma_root(v, y, cfg)?.value;
    let ev = averaged(v);
    let gev = gamma_root(&ev, y, cfg)?.value;
    let closed = yn * (2.0 * v.v_mean()).sqrt();
    Ok(Comparison {
        y: y.to_vec(),
        gamma_v: gv,
        gamma_ev: gev,
        closed_form: closed,
        inequality_holds: gv <= gev * (1.0 + 1e-3),
        closed_form_ok: rel_gap(gev, closed) <= 1e-2 || closed == 0.0 && gev == 0.0,
        gap: gev - gv,
    })
}
