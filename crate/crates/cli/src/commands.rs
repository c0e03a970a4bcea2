use std::collections::BTreeMap;
use std::path::Path;

use lyapvar_core::functionals::{sigma_variational, DensityParams};
use lyapvar_core::gamma::{compare_average, gamma, gamma_root, GammaResult};
use lyapvar_core::montecarlo::{mc_free_energy, mc_survival_decay_1d, FreeEnergyRun, SurvivalFit, SurvivalRun, TiltSpec};
use lyapvar_core::spectral::{inverse_r_check, lipschitz_check, r_transform, SigmaCache};
use lyapvar_core::{Error, PotentialField};
use serde::Serialize;

use crate::config::{RunConfig, TiltChoice};
use crate::report::Report;

pub type Rows = Vec<Vec<String>>;

/// A named CSV table written next to the report.
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Rows,
}

impl Table {
    fn new(name: &str, header: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> csv::Result<()> {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", self.name)))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn vec_label(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("({})", parts.join(","))
}

fn axis_columns(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|a| format!("{prefix}_{a}")).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub report: &'a mut Report,
    pub tables: Vec<Table>,
}

impl Context<'_> {
    fn potential(&mut self) -> Option<PotentialField> {
        match self.cfg.realize() {
            Ok(v) => Some(v),
            Err(e) => {
                self.report.error("potential", &e);
                None
            }
        }
    }

    fn cache(&self, v: &PotentialField) -> SigmaCache {
        SigmaCache::new(v.clone(), self.cfg.eigen)
    }

    fn record<T: Serialize>(&mut self, key: &str, items: &[T]) {
        self.report.result(key, &items);
    }
}

fn gamma_checks(ctx: &mut Context, r: &GammaResult) {
    let label = vec_label(&r.y);
    let tol = ctx.cfg.checks.minimax_tol;
    ctx.report.gaps.insert(format!("minimax{label}"), r.minimax_gap);
    ctx.report.gaps.insert(format!("root_infsup{label}"), r.root_infsup_gap);
    ctx.report.check(
        format!("minimax equality at y={label}"),
        r.minimax_gap <= tol,
        format!("gap {:.3e} vs {tol:.0e}", r.minimax_gap),
    );
    ctx.report.check(format!("weak duality at y={label}"), r.weak_duality, "infsup >= supinf");
}

pub fn run_gamma(ctx: &mut Context) {
    let Some(v) = ctx.potential() else { return };
    let g = ctx.cfg.gamma_config();
    let dim = v.grid().dim();
    let mut header = axis_columns("y", dim);
    header.extend(["gamma_root", "gamma_infsup", "gamma_supinf", "minimax_gap", "refined"].map(String::from));
    let mut table = Table::new("gamma", header);
    let mut out = Vec::new();
    for y in &ctx.cfg.y {
        match gamma(&v, y, &g) {
            Ok(r) => {
                gamma_checks(ctx, &r);
                let mut row: Vec<String> = y.iter().map(|x| num(*x)).collect();
                row.extend([r.value_root, r.value_infsup, r.value_supinf, r.minimax_gap].map(num));
                row.push(r.refined.to_string());
                table.rows.push(row);
                out.push(r);
            }
            Err(e) => ctx.report.error(format!("gamma y={}", vec_label(y)), &e),
        }
    }
    ctx.record("gamma", &out);
    ctx.tables.push(table);
}

#[derive(Serialize)]
struct SigmaRow {
    lambda: Vec<f64>,
    spectral: f64,
    variational: Option<f64>,
    reflected: f64,
    sigma_minus_half_l2: f64,
    relative_gap: Option<f64>,
}

pub fn run_sigma(ctx: &mut Context) {
    let Some(v) = ctx.potential() else { return };
    let cache = ctx.cache(&v);
    let g = ctx.cfg.gamma_config();
    let dim = v.grid().dim();
    let mut header = axis_columns("lambda", dim);
    header.extend(["sigma_spectral", "sigma_variational", "sigma_minus_half_l2"].map(String::from));
    let mut table = Table::new("sigma", header);
    let mut out = Vec::new();
    for lam in &ctx.cfg.lambda {
        let label = vec_label(lam);
        let neg: Vec<f64> = lam.iter().map(|x| -x).collect();
        let (spectral, reflected) = match (cache.sigma(lam), cache.sigma(&neg)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                ctx.report.error(format!("sigma_spectral lambda={label}"), &e);
                continue;
            }
        };
        ctx.report.check(
            format!("sigma even at lambda={label}"),
            (spectral - reflected).abs() <= 1e-8,
            format!("|difference| {:.3e}", (spectral - reflected).abs()),
        );
        let variational = match sigma_variational(&v, lam, &g.opt) {
            Ok(s) => Some(s.value),
            Err(e) => {
                ctx.report.error(format!("sigma_variational lambda={label}"), &e);
                None
            }
        };
        let gap = variational.map(|s| rel(s, spectral));
        if let (Some(s), Some(gp)) = (variational, gap) {
            let tol = ctx.cfg.checks.sigma_tol;
            ctx.report.gaps.insert(format!("sigma{label}"), gp);
            ctx.report.check(
                format!("variational and spectral sigma agree at lambda={label}"),
                gp <= tol,
                format!("relative gap {gp:.3e} vs {tol:.0e}"),
            );
            ctx.report.check(
                format!("variational sigma bounds spectral sigma at lambda={label}"),
                s >= spectral - 1e-8,
                format!("{s} >= {spectral}"),
            );
        }
        let l2: f64 = lam.iter().map(|x| x * x).sum();
        let mut row: Vec<String> = lam.iter().map(|x| num(*x)).collect();
        row.push(num(spectral));
        row.push(variational.map(num).unwrap_or_default());
        row.push(num(spectral - 0.5 * l2));
        table.rows.push(row);
        out.push(SigmaRow {
            lambda: lam.clone(),
            spectral,
            variational,
            reflected,
            sigma_minus_half_l2: spectral - 0.5 * l2,
            relative_gap: gap,
        });
    }
    ctx.record("sigma", &out);
    ctx.tables.push(table);
}

pub fn run_rtransform(ctx: &mut Context) {
    let Some(v) = ctx.potential() else { return };
    let cache = ctx.cache(&v);
    let sigma = |l: &[f64]| cache.sigma(l);
    let vmax = Some(v.v_max());
    let rcfg = ctx.cfg.rtransform;
    let dim = v.grid().dim();
    let mut header = axis_columns("y", dim);
    header.extend(axis_columns("eta", dim));
    header.extend(["s_star", "monotone"].map(String::from));
    let mut roots = Table::new("roots", header);
    let mut out = Vec::new();
    for y in &ctx.cfg.y {
        let label = vec_label(y);
        match r_transform(&sigma, y, vmax, &rcfg) {
            Ok(r) => {
                ctx.report.check(
                    format!("ray functions decrease at y={label}"),
                    r.all_monotone(),
                    format!("{} rays", r.roots.len()),
                );
                for d in &r.roots {
                    let mut row: Vec<String> = y.iter().chain(&d.eta).map(|x| num(*x)).collect();
                    row.push(num(d.s_star));
                    row.push(d.monotone.to_string());
                    roots.rows.push(row);
                }
                out.push(r);
            }
            Err(e) => ctx.report.error(format!("r_transform y={label}"), &e),
        }
    }
    ctx.record("rtransform", &out);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = ctx.cfg.y.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
    if !pairs.is_empty() {
        match lipschitz_check(&sigma, &pairs, vmax, &rcfg) {
            Ok(rep) => {
                ctx.report.check(
                    "R(sigma) Lipschitz on consecutive y",
                    rep.all_hold,
                    format!("C = {}", rep.constant),
                );
                ctx.report.result("lipschitz", &rep);
            }
            Err(e) => ctx.report.error("lipschitz", &e),
        }
    }
    let mut inverse = Vec::new();
    let zero = vec![0.0; dim];
    for lam in &ctx.cfg.lambda {
        let label = vec_label(lam);
        let res = sigma(&zero).and_then(|c| {
            let direct = sigma(lam)? - 0.5 * lam.iter().map(|x| x * x).sum::<f64>();
            Ok((c, direct, inverse_r_check(&sigma, lam, c, vmax, &rcfg)?))
        });
        match res {
            Ok((c, direct, chk)) => {
                let target = direct.min(c);
                let err = (chk.recovered - target).abs();
                let tol = ctx.cfg.checks.route_tol * c.abs().max(1e-12);
                ctx.report.gaps.insert(format!("inverse_r{label}"), err);
                ctx.report.check(
                    format!("inverse R recovers sigma at lambda={label}"),
                    err <= tol,
                    format!("recovered {} vs {target}", chk.recovered),
                );
                inverse.push(chk);
            }
            Err(e) => ctx.report.error(format!("inverse_r lambda={label}"), &e),
        }
    }
    ctx.record("inverse_r", &inverse);
    ctx.tables.push(roots);
}

fn tilt_for(choice: TiltChoice, v: &PotentialField, root: Option<(f64, &DensityParams)>) -> Option<TiltSpec> {
    match (choice, root) {
        (TiltChoice::None, _) => None,
        (TiltChoice::Gamma, Some((a, p))) if a > 0.0 => Some(TiltSpec {
            density: p.clone(),
            direction: 1.0,
            a,
        }),
        _ => Some(TiltSpec::uniform((2.0 * v.v_mean()).sqrt())),
    }
}

fn survival(ctx: &mut Context, v: &PotentialField, target: f64, tilt: Option<TiltSpec>) -> Option<SurvivalFit> {
    let mc = &ctx.cfg.mc;
    let run = SurvivalRun {
        r_list: mc.r_list.clone(),
        npaths: mc.survival_npaths,
        dt: mc.survival_dt,
        seed: ctx.cfg.seed,
        t_max: mc.t_max,
        log_cutoff: mc.log_cutoff,
        min_survivors: mc.min_survivors,
    };
    match mc_survival_decay_1d(v, &run, tilt.as_ref()) {
        Ok(fit) => {
            let gap = rel(fit.slope, target);
            let tol = ctx.cfg.checks.slope_tol;
            ctx.report.gaps.insert("survival_slope".into(), gap);
            ctx.report.check(
                "survival slope matches the root route",
                gap <= tol,
                format!("slope {} vs {target}", fit.slope),
            );
            let mut t = Table::new(
                "survival",
                ["r", "log_e", "stderr_log", "relative_variance", "survivors", "capped", "truncated"]
                    .map(String::from)
                    .to_vec(),
            );
            for p in &fit.points {
                let mut row = [p.r, p.log_e, p.stderr_log, p.relative_variance].map(num).to_vec();
                row.extend([p.survivors, p.capped, p.truncated].map(|c| c.to_string()));
                t.rows.push(row);
            }
            ctx.tables.push(t);
            Some(fit)
        }
        Err(e) => {
            ctx.report.error("survival", &e);
            None
        }
    }
}

#[derive(Serialize)]
struct LyapunovRow {
    gamma: GammaResult,
    r_sigma: Option<f64>,
    root_vs_r_sigma: Option<f64>,
}

pub fn run_lyapunov(ctx: &mut Context) {
    let Some(v) = ctx.potential() else { return };
    let cache = ctx.cache(&v);
    let sigma = |l: &[f64]| cache.sigma(l);
    let g = ctx.cfg.gamma_config();
    let mut out = Vec::new();
    for y in &ctx.cfg.y {
        let label = vec_label(y);
        let r = match gamma(&v, y, &g) {
            Ok(r) => r,
            Err(e) => {
                ctx.report.error(format!("gamma y={label}"), &e);
                continue;
            }
        };
        gamma_checks(ctx, &r);
        let rs = match r_transform(&sigma, y, Some(v.v_max()), &ctx.cfg.rtransform) {
            Ok(t) => Some(t.value),
            Err(e) => {
                ctx.report.error(format!("r_transform y={label}"), &e);
                None
            }
        };
        let gap = rs.map(|s| rel(r.value_root, s));
        if let Some(gp) = gap {
            let tol = ctx.cfg.checks.route_tol;
            ctx.report.gaps.insert(format!("root_r_sigma{label}"), gp);
            ctx.report.check(
                format!("root route matches R(sigma) at y={label}"),
                gp <= tol,
                format!("relative gap {gp:.3e} vs {tol:.0e}"),
            );
        }
        out.push(LyapunovRow {
            gamma: r,
            r_sigma: rs,
            root_vs_r_sigma: gap,
        });
    }
    // the survival spot check runs towards +1 and is scaled to |y| = 1
    if v.grid().dim() == 1 && ctx.cfg.mc.survival {
        let unit = out.iter().find(|row| row.gamma.y[0] != 0.0).map(|row| &row.gamma);
        if let Some(r) = unit {
            let rate = r.value_root / r.y[0].abs();
            let tilt = tilt_for(ctx.cfg.mc.tilt, &v, Some((rate, &r.root.params)));
            if let Some(fit) = survival(ctx, &v, rate, tilt) {
                ctx.report.result("survival", &fit);
            }
        }
    }
    ctx.record("lyapunov", &out);
}

#[derive(Serialize)]
struct FreeEnergyRow {
    lambda: Vec<f64>,
    estimate: lyapvar_core::montecarlo::McEstimate,
    spectral: f64,
    deviation_in_stderr: f64,
}

pub fn run_mc(ctx: &mut Context) {
    let Some(v) = ctx.potential() else { return };
    let cache = ctx.cache(&v);
    let mc = ctx.cfg.mc.clone();
    let run = FreeEnergyRun {
        t_horizon: mc.t_horizon,
        dt: mc.dt,
        npaths: mc.npaths,
        seed: ctx.cfg.seed,
    };
    let mut out = Vec::new();
    for lam in &ctx.cfg.lambda {
        let label = vec_label(lam);
        let res = cache
            .sigma(lam)
            .and_then(|s| Ok((-s, mc_free_energy(&v, lam, &run)?)));
        match res {
            Ok((spectral, est)) => {
                let dev = (est.value - spectral).abs();
                let k = ctx.cfg.checks.mc_sigmas;
                ctx.report.check(
                    format!("free energy matches the eigenvalue at lambda={label}"),
                    dev <= k * est.stderr + 1e-9,
                    format!("{} +- {} vs {spectral}", est.value, est.stderr),
                );
                out.push(FreeEnergyRow {
                    lambda: lam.clone(),
                    spectral,
                    deviation_in_stderr: if est.stderr > 0.0 { dev / est.stderr } else { 0.0 },
                    estimate: est,
                });
            }
            Err(e) => ctx.report.error(format!("free energy lambda={label}"), &e),
        }
    }
    ctx.record("free_energy", &out);
    if v.grid().dim() == 1 && mc.survival {
        let root = match gamma_root(&v, &[1.0], &ctx.cfg.gamma_config()) {
            Ok(r) => r,
            Err(e) => {
                ctx.report.error("gamma_root y=(1)", &e);
                return;
            }
        };
        let tilt = tilt_for(mc.tilt, &v, Some((root.value, &root.params)));
        if let Some(fit) = survival(ctx, &v, root.value, tilt) {
            ctx.report.result("survival", &fit);
        }
    }
}

pub fn run_compare(ctx: &mut Context) {
    let Some(v) = ctx.potential() else { return };
    let g = ctx.cfg.gamma_config();
    let mut out = Vec::new();
    for y in &ctx.cfg.y {
        let label = vec_label(y);
        match compare_average(&v, y, &g) {
            Ok(c) => {
                ctx.report.check(
                    format!("Gamma_V <= Gamma_EV at y={label}"),
                    c.inequality_holds,
                    format!("{} vs {}", c.gamma_v, c.gamma_ev),
                );
                ctx.report.check(
                    format!("Gamma_EV closed form at y={label}"),
                    c.closed_form_ok,
                    format!("{} vs {}", c.gamma_ev, c.closed_form),
                );
                out.push(c);
            }
            Err(e) => ctx.report.error(format!("compare y={label}"), &e),
        }
    }
    ctx.record("compare_average", &out);
}

fn code_of(e: &Error) -> String {
    e.code().to_string()
}

pub fn run_sweep(ctx: &mut Context) {
    let dim = ctx.cfg.grid.dim;
    let mut header = axis_columns("y", dim);
    header.extend(axis_columns("lambda", dim));
    header.extend(
        ["gamma_root", "gamma_infsup", "gamma_supinf", "r_sigma", "sigma", "sigma_minus_half_l2", "status"]
            .map(String::from),
    );
    let mut table = Table::new("sweep", header);
    let points = ctx.cfg.y.len() * ctx.cfg.lambda.len();
    if points > 0 {
        let Some(v) = ctx.potential() else {
            ctx.tables.push(table);
            return;
        };
        let cache = ctx.cache(&v);
        let sigma = |l: &[f64]| cache.sigma(l);
        let g = ctx.cfg.gamma_config();
        let mut per_y: BTreeMap<usize, (Result<GammaResult, Error>, Result<f64, Error>)> = BTreeMap::new();
        let mut failures = 0;
        for (i, y) in ctx.cfg.y.iter().enumerate() {
            let gr = gamma(&v, y, &g);
            let rs = r_transform(&sigma, y, Some(v.v_max()), &ctx.cfg.rtransform).map(|r| r.value);
            per_y.insert(i, (gr, rs));
        }
        for (i, y) in ctx.cfg.y.iter().enumerate() {
            let (gr, rs) = &per_y[&i];
            for lam in &ctx.cfg.lambda {
                let mut row: Vec<String> = y.iter().chain(lam).map(|x| num(*x)).collect();
                let mut status = Vec::new();
                match gr {
                    Ok(r) => row.extend([r.value_root, r.value_infsup, r.value_supinf].map(num)),
                    Err(e) => {
                        row.extend([String::new(), String::new(), String::new()]);
                        status.push(code_of(e));
                    }
                }
                match rs {
                    Ok(x) => row.push(num(*x)),
                    Err(e) => {
                        row.push(String::new());
                        status.push(code_of(e));
                    }
                }
                match sigma(lam) {
                    Ok(s) => {
                        let l2: f64 = lam.iter().map(|x| x * x).sum();
                        row.push(num(s));
                        row.push(num(s - 0.5 * l2));
                    }
                    Err(e) => {
                        row.extend([String::new(), String::new()]);
                        status.push(code_of(&e));
                    }
                }
                if !status.is_empty() {
                    failures += 1;
                }
                row.push(if status.is_empty() { "ok".into() } else { status.join(";") });
                table.rows.push(row);
            }
        }
        ctx.report.gaps.insert("failed_rows".into(), failures as f64);
    }
    ctx.report.result("sweep_rows", &table.rows.len());
    ctx.tables.push(table);
}
