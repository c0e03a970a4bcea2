//! A quick invariant suite on small grids.

use lyapvar_core::corrector::{h_value, min_flux, CgConfig, EffectiveTensor};
use lyapvar_core::functionals::{density, starting_points, OptConfig};
use lyapvar_core::gamma::{gamma, GammaConfig};
use lyapvar_core::montecarlo::{mc_free_energy, FreeEnergyRun};
use lyapvar_core::spectral::{inverse_r_check, r_transform, sigma_spectral, EigConfig, RConfig, SigmaCache};
use lyapvar_core::{realize, PotentialSpec, Result, ScalarField, TorusGrid};

use crate::report::Report;

type Case = (&'static str, fn(u64) -> Result<(bool, String)>);

fn constant_routes(_: u64) -> Result<(bool, String)> {
    let v = realize(&PotentialSpec::constant(0.5), &TorusGrid::line(64, 1.0)?)?;
    let r = gamma(&v, &[1.0], &GammaConfig::default())?;
    let worst = [r.value_root, r.value_infsup, r.value_supinf]
        .iter()
        .map(|x| (x - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((worst < 1e-2, format!("max |Gamma - 1| = {worst:.2e}")))
}

fn harmonic_mean(_: u64) -> Result<(bool, String)> {
    let g = TorusGrid::line(128, 1.0)?;
    let f = ScalarField::from_fn(g, |x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).cos());
    let h = h_value(&[1.0], &f, &CgConfig::with_tol(1e-11))?;
    let err = (h - 3f64.sqrt() / 2.0).abs();
    Ok((err < 1e-6, format!("|H - sqrt(3)/2| = {err:.2e}")))
}

fn h_bounds(seed: u64) -> Result<(bool, String)> {
    let g = TorusGrid::square(16, 1.0)?;
    let cfg = OptConfig {
        starts: 5,
        seed,
        init_scale: 1.0,
        ..OptConfig::default()
    };
    let mut ok = true;
    for (k, p) in starting_points(&g, &cfg, &[])?.iter().enumerate().skip(1) {
        let f = density(p, &g)?;
        let t = 0.7 * k as f64;
        let h = h_value(&[t.cos(), t.sin()], &f, &CgConfig::default())?;
        ok &= h >= f.min() - 1e-8 && h <= 1.0 + 1e-8;
    }
    Ok((ok, "min f <= H(eta, f) <= 1 on 5 draws".into()))
}

fn flux_duality(_: u64) -> Result<(bool, String)> {
    let g = TorusGrid::square(16, 1.0)?;
    let f = ScalarField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * (x[0] + x[1])).sin());
    let cfg = CgConfig::with_tol(1e-11);
    let flux = min_flux(&f, &[1.0, 0.0], &cfg)?.value;
    let dual = EffectiveTensor::compute(&f, &cfg, None)?.dual_flux_value(&[1.0, 0.0]);
    let gap = (flux - dual).abs() / flux;
    Ok((gap < 1e-4, format!("relative gap {gap:.2e}")))
}

fn sigma_symmetry(_: u64) -> Result<(bool, String)> {
    let v = realize(&PotentialSpec::cosine(1.0), &TorusGrid::line(64, 1.0)?)?;
    let cfg = EigConfig::default();
    let a = sigma_spectral(&v, &[0.6], &cfg)?.value;
    let b = sigma_spectral(&v, &[-0.6], &cfg)?.value;
    Ok(((a - b).abs() < 1e-8, format!("|sigma(l) - sigma(-l)| = {:.2e}", (a - b).abs())))
}

fn constant_r_transform(_: u64) -> Result<(bool, String)> {
    let sigma = |_: &[f64]| Ok(0.5);
    let r = r_transform(&sigma, &[0.6, 0.8], Some(0.5), &RConfig::default())?;
    let inv = inverse_r_check(&sigma, &[0.5], 0.5, Some(0.5), &RConfig::default())?;
    let ok = (r.value - 1.0).abs() < 1e-8 && (inv.recovered - 0.375).abs() < 1e-6;
    Ok((ok, format!("R = {}, recovered {}", r.value, inv.recovered)))
}

fn cosine_routes(_: u64) -> Result<(bool, String)> {
    let v = realize(&PotentialSpec::cosine(1.0), &TorusGrid::line(64, 1.0)?)?;
    let cache = SigmaCache::new(v.clone(), EigConfig::default());
    let r = r_transform(&|l: &[f64]| cache.sigma(l), &[1.0], Some(v.v_max()), &RConfig::default())?;
    let g = gamma(&v, &[1.0], &GammaConfig::default())?;
    let gap = (g.value_root - r.value).abs() / g.value_root;
    Ok((gap < 2e-2, format!("root {} vs R(sigma) {}", g.value_root, r.value)))
}

fn constant_free_energy(seed: u64) -> Result<(bool, String)> {
    let v = realize(&PotentialSpec::constant(0.3), &TorusGrid::line(16, 1.0)?)?;
    let run = FreeEnergyRun {
        t_horizon: 10.0,
        dt: 1e-2,
        npaths: 1000,
        seed,
    };
    let e = mc_free_energy(&v, &[0.0], &run)?;
    Ok(((e.value + 0.3).abs() < 1e-10, format!("estimate {}", e.value)))
}

const CASES: [Case; 8] = [
    ("constant potential, three routes", constant_routes),
    ("1D corrector harmonic mean", harmonic_mean),
    ("H bounds on random densities", h_bounds),
    ("flux projection duality", flux_duality),
    ("sigma reflection symmetry", sigma_symmetry),
    ("R-transform of a constant", constant_r_transform),
    ("root route vs R(sigma), cosine", cosine_routes),
    ("free energy of a constant potential", constant_free_energy),
];

/// Runs every case, records it in the report and prints one line each.
pub fn run(report: &mut Report, seed: u64) {
    for (name, case) in CASES {
        match case(seed) {
            Ok((passed, detail)) => {
                println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
                report.check(name, passed, detail);
            }
            Err(e) => {
                println!("FAIL {name}: {e}");
                report.error(name, &e);
                report.check(name, false, e.to_string());
            }
        }
    }
}
