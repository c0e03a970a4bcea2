//! End-to-end acceptance run. Every criterion is evaluated twice, on one and
//! on three worker threads; the serialized records of both runs must match
//! byte for byte.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use lyapvar_core::corrector::{h_value, min_flux, CgConfig};
use lyapvar_core::directions::golden_max;
use lyapvar_core::functionals::{sigma_variational, OptConfig};
use lyapvar_core::gamma::{compare_average, gamma_infsup, gamma_root, gamma_supinf, GammaConfig};
use lyapvar_core::montecarlo::{mc_free_energy, mc_survival_decay_1d, FreeEnergyRun, SurvivalRun, TiltSpec};
use lyapvar_core::spectral::{inverse_r_check, r_transform, EigConfig, RConfig, SigmaCache};
use lyapvar_core::{realize, PotentialField, PotentialSpec, ScalarField, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Outcome {
    passed: bool,
    detail: String,
    record: Value,
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn line(n: usize) -> PotentialField {
    potential(&PotentialSpec::cosine(1.0), TorusGrid::line(n, 1.0).unwrap())
}

fn square(n: usize) -> PotentialField {
    potential(&PotentialSpec::cosine(1.0), TorusGrid::square(n, 1.0).unwrap())
}

fn potential(spec: &PotentialSpec, grid: TorusGrid) -> PotentialField {
    realize(spec, &grid).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn r_sigma(v: &PotentialField, y: &[f64]) -> f64 {
    let cache = SigmaCache::new(v.clone(), EigConfig::default());
    r_transform(&|l: &[f64]| cache.sigma(l), y, Some(v.v_max()), &RConfig::default())
        .unwrap()
        .value
}

/// `exp(g) / E[exp(g)]` with `g` a random trigonometric polynomial.
fn random_density(grid: TorusGrid, rng: &mut ChaCha8Rng) -> ScalarField {
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let k0 = rng.random_range(-2..=2) as f64;
            let k1 = if grid.dim() == 2 { rng.random_range(-2..=2) as f64 } else { 0.0 };
            let amp = rng.random_range(-0.6..0.6) / (1.0 + k0 * k0 + k1 * k1);
            (k0, k1, amp, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let g = ScalarField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|(k0, k1, a, p)| a * (2.0 * PI * (k0 * x[0] + k1 * x[1]) + p).cos())
            .sum::<f64>()
            .exp()
    });
    let m = g.mean();
    g.map(|v| v / m)
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let t: f64 = rng.random_range(0.0..2.0 * PI);
    [t.cos(), t.sin()]
}

fn c1_constant() -> Outcome {
    let v = potential(&PotentialSpec::constant(0.5), TorusGrid::line(128, 1.0).unwrap());
    let exact = 1.0 * (2.0f64 * 0.5).sqrt();
    let cfg = GammaConfig::default();
    let values = [
        gamma_root(&v, &[1.0], &cfg).unwrap().value,
        gamma_infsup(&v, &[1.0], &cfg.opt).unwrap().value,
        gamma_supinf(&v, &[1.0], &cfg).unwrap().value,
        r_sigma(&v, &[1.0]),
    ];
    let worst = values.iter().map(|x| rel(*x, exact)).fold(0.0, f64::max);
    Outcome {
        passed: worst < 1e-2,
        detail: format!("root/infsup/supinf/R(sigma) = {values:.6?}, max rel err {worst:.2e}"),
        record: json!(values),
    }
}

fn route_cases() -> Vec<(PotentialField, Vec<f64>)> {
    vec![
        (line(256), vec![1.0]),
        (square(64), vec![1.0, 0.0]),
        (square(64), vec![0.6, 0.8]),
    ]
}

fn c2_routes_agree() -> Outcome {
    let cfg = GammaConfig::default();
    let mut passed = true;
    let mut detail = Vec::new();
    let mut record = Vec::new();
    for (v, y) in route_cases() {
        let root = gamma_root(&v, &y, &cfg).unwrap().value;
        let rs = r_sigma(&v, &y);
        let gap = rel(rs, root);
        passed &= gap < 2e-2;
        detail.push(format!("d={} y={y:?}: root {root:.6} R {rs:.6} gap {gap:.1e}", v.grid().dim()));
        record.push(json!([root, rs]));
    }
    Outcome {
        passed,
        detail: detail.join("; "),
        record: json!(record),
    }
}

fn c3_minimax() -> Outcome {
    let cfg = GammaConfig::default();
    let mut passed = true;
    let mut detail = Vec::new();
    let mut record = Vec::new();
    for (v, y) in route_cases() {
        let a = gamma_infsup(&v, &y, &cfg.opt).unwrap().value;
        let b = gamma_supinf(&v, &y, &cfg).unwrap().value;
        let gap = (a - b).abs() / a;
        passed &= gap < 1e-2;
        detail.push(format!("d={} y={y:?}: {a:.6} vs {b:.6} gap {gap:.1e}", v.grid().dim()));
        record.push(json!([a, b]));
    }
    Outcome {
        passed,
        detail: detail.join("; "),
        record: json!(record),
    }
}

fn c4_projection() -> Outcome {
    let grid = TorusGrid::square(32, 1.0).unwrap();
    let cfg = CgConfig::with_tol(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut record = Vec::new();
    for _ in 0..5 {
        let f = random_density(grid, &mut rng);
        let y = random_unit(&mut rng);
        let primal = min_flux(&f, &y, &cfg).unwrap().value;
        // brute-force sup over directions of <y, eta>^2 / H(eta, f), one
        // corrector solve per direction
        let ratio = |t: f64| -> lyapvar_core::Result<f64> {
            let eta = [t.cos(), t.sin()];
            let p = y[0] * eta[0] + y[1] * eta[1];
            Ok(p * p / h_value(&eta, &f, &cfg)?)
        };
        let center = y[1].atan2(y[0]);
        let samples = 90;
        let step = PI / samples as f64;
        let (mut best_t, mut best) = (center, f64::NEG_INFINITY);
        for k in 0..samples {
            let t = center - 0.5 * PI + (k as f64 + 0.5) * step;
            let r = ratio(t).unwrap();
            if r > best {
                best = r;
                best_t = t;
            }
        }
        let (_, dual) = golden_max(best_t - step, best_t + step, 1e-7, ratio).unwrap();
        let gap = rel(dual.max(best), primal);
        worst = worst.max(gap);
        record.push(json!([primal, dual]));
    }
    Outcome {
        passed: worst < 1e-4,
        detail: format!("max relative gap {worst:.2e} over 5 densities"),
        record: json!(record),
    }
}

/// Modified Bessel function `I_0` by its power series.
fn bessel_i0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= (x / 2.0) * (x / 2.0) / (k * k) as f64;
        sum += term;
    }
    sum
}

fn c5_corrector_1d() -> Outcome {
    let grid = TorusGrid::line(256, 1.0).unwrap();
    let cfg = CgConfig::with_tol(1e-12);
    let b = 0.8;
    let fine = 8192;
    let third = |x: f64| 1.0 + 0.3 * (2.0 * PI * x).cos() + 0.2 * (4.0 * PI * x).sin();
    // harmonic means: 1 + a cos has sqrt(1 - a^2); exp(b sin) / I0(b) has
    // 1 / I0(b)^2; the third by a fine periodic trapezoid rule
    let h3 = fine as f64 / (0..fine).map(|i| 1.0 / third(i as f64 / fine as f64)).sum::<f64>();
    let cases: Vec<(ScalarField, f64)> = vec![
        (ScalarField::from_fn(grid, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()), (1.0f64 - 0.25).sqrt()),
        (
            ScalarField::from_fn(grid, |x| (b * (2.0 * PI * x[0]).sin()).exp() / bessel_i0(b)),
            1.0 / bessel_i0(b).powi(2),
        ),
        (ScalarField::from_fn(grid, |x| third(x[0])), h3),
    ];
    let mut worst: f64 = 0.0;
    let mut record = Vec::new();
    for (f, exact) in &cases {
        let h = h_value(&[1.0], f, &cfg).unwrap();
        worst = worst.max((h - exact).abs());
        record.push(h);
    }
    Outcome {
        passed: worst < 1e-6,
        detail: format!("max |H - harmonic mean| = {worst:.2e}"),
        record: json!(record),
    }
}

fn c6_h_bounds() -> Outcome {
    let cfg = CgConfig::with_tol(1e-11);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = true;
    let mut record = Vec::new();
    for k in 0..20 {
        let grid = if k % 2 == 0 {
            TorusGrid::square(32, 1.0).unwrap()
        } else {
            TorusGrid::line(64, 1.0).unwrap()
        };
        let f = random_density(grid, &mut rng);
        let eta = if grid.dim() == 2 { random_unit(&mut rng).to_vec() } else { vec![1.0] };
        let h = h_value(&eta, &f, &cfg).unwrap();
        ok &= h >= f.min() - 1e-8 && h <= 1.0 + 1e-8;
        record.push(h);
    }
    let one = ScalarField::constant(TorusGrid::square(32, 1.0).unwrap(), 1.0);
    let h1 = h_value(&[0.6, 0.8], &one, &cfg).unwrap();
    let unit_ok = (h1 - 1.0).abs() < 1e-10;
    Outcome {
        passed: ok && unit_ok,
        detail: format!("20 draws within [min f, 1]: {ok}; |H(eta, 1) - 1| = {:.1e}", (h1 - 1.0).abs()),
        record: json!(record),
    }
}

fn c7_sigma_structure() -> Outcome {
    let v = square(32);
    let cache = SigmaCache::new(v.clone(), EigConfig::default());
    let s = |l: [f64; 2]| cache.sigma(&l).unwrap();
    let m = |l: [f64; 2]| s(l) - 0.5 * (l[0] * l[0] + l[1] * l[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sym: f64 = 0.0;
    let mut conc: f64 = 0.0;
    for _ in 0..10 {
        let a = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        let b = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        sym = sym.max((s(a) - s([-a[0], -a[1]])).abs());
        let mid = m([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        conc = conc.max(0.5 * (m(a) + m(b)) - mid);
    }
    let eta = random_unit(&mut rng);
    let ray: Vec<f64> = (0..8).map(|k| m([0.3 * k as f64 * eta[0], 0.3 * k as f64 * eta[1]])).collect();
    let decreasing = ray.windows(2).all(|w| w[1] < w[0]);
    Outcome {
        passed: sym < 1e-8 && decreasing && conc < 1e-8,
        detail: format!("max |s(l) - s(-l)| {sym:.1e}; ray decreasing {decreasing}; max concavity defect {conc:.1e}"),
        record: json!([sym, ray, conc]),
    }
}

fn c8_sigma_routes() -> Outcome {
    let v = line(256);
    let spec = SigmaCache::new(v.clone(), EigConfig::default()).sigma(&[0.0]).unwrap();
    let var = sigma_variational(&v, &[0.0], &OptConfig::default()).unwrap().value;
    let gap = rel(var, spec);
    Outcome {
        passed: gap < 1e-3,
        detail: format!("variational {var:.8} spectral {spec:.8} gap {gap:.1e}"),
        record: json!([var, spec]),
    }
}

fn c9_comparison() -> Outcome {
    let grid = TorusGrid::square(32, 1.0).unwrap();
    let cfg = GammaConfig::default();
    let y = [0.6, 0.8];
    let mut ok = true;
    let mut detail = Vec::new();
    let mut record = Vec::new();
    for seed in 0..5 {
        let spec = PotentialSpec::chessboard(4, 0.0, 2.0, seed, 0.05);
        let v = potential(&spec, grid);
        let c = compare_average(&v, &y, &cfg).unwrap();
        let closed = (2.0 * v.v_mean()).sqrt();
        let holds = c.gamma_v <= c.gamma_ev * (1.0 + 1e-3) && rel(c.gamma_ev, closed) < 1e-2;
        ok &= holds;
        detail.push(format!("{:.4}<={:.4}", c.gamma_v, c.gamma_ev));
        record.push(json!([c.gamma_v, c.gamma_ev]));
    }
    Outcome {
        passed: ok,
        detail: format!("Gamma_V <= Gamma_EV on 5 draws: {}", detail.join(", ")),
        record: json!(record),
    }
}

fn c10_monte_carlo() -> Outcome {
    let cos = line(256);
    let constant = potential(&PotentialSpec::constant(0.5), TorusGrid::line(256, 1.0).unwrap());
    let s0 = SigmaCache::new(cos.clone(), EigConfig::default()).sigma(&[0.0]).unwrap();
    let fe = mc_free_energy(&cos, &[0.0], &FreeEnergyRun::default()).unwrap();
    let fe_ok = (fe.value + s0).abs() <= 3.0 * fe.stderr;
    let mut detail = vec![format!(
        "free energy {:.5} +- {:.1e} vs {:.5}",
        fe.value, fe.stderr, -s0
    )];
    let mut ok = fe_ok;
    let mut record = vec![json!([fe.value, fe.stderr])];
    for (name, v) in [("constant", &constant), ("cosine", &cos)] {
        let root = gamma_root(v, &[1.0], &GammaConfig::default()).unwrap();
        let plain = SurvivalRun { dt: 1e-2, ..SurvivalRun::default() };
        let untilted = mc_survival_decay_1d(v, &plain, None).unwrap().slope;
        let tilt = TiltSpec {
            density: root.params.clone(),
            direction: 1.0,
            a: root.value,
        };
        let tilted = mc_survival_decay_1d(v, &SurvivalRun::default(), Some(&tilt)).unwrap().slope;
        for s in [untilted, tilted] {
            ok &= rel(s, root.value) < 0.1;
        }
        detail.push(format!(
            "{name}: slopes {untilted:.4} (plain) {tilted:.4} (tilted) vs {:.4}",
            root.value
        ));
        record.push(json!([untilted, tilted]));
    }
    Outcome {
        passed: ok,
        detail: detail.join("; "),
        record: json!(record),
    }
}

fn c11_homogeneity() -> Outcome {
    let cfg = GammaConfig::default();
    let mut worst: f64 = 0.0;
    let mut record = Vec::new();
    for (v, y) in [(line(256), vec![1.0]), (square(64), vec![0.6, 0.8])] {
        let base = gamma_root(&v, &y, &cfg).unwrap().value;
        for c in [0.5, 2.0] {
            let cy: Vec<f64> = y.iter().map(|x| c * x).collect();
            let g = gamma_root(&v, &cy, &cfg).unwrap().value;
            worst = worst.max(rel(g, c * base));
            record.push(g);
        }
    }
    Outcome {
        passed: worst < 1e-2,
        detail: format!("max |Gamma(cy) - c Gamma(y)| / c Gamma(y) = {worst:.1e}"),
        record: json!(record),
    }
}

fn c12_inverse_r() -> Outcome {
    let cfg = RConfig::default();
    let v = 0.8;
    let sigma = |_: &[f64]| Ok(v);
    let a = inverse_r_check(&sigma, &[0.0], v / 2.0, Some(v), &cfg).unwrap();
    let lam = (v / 2.0f64).sqrt();
    let b = inverse_r_check(&sigma, &[lam], v, Some(v), &cfg).unwrap();
    let const_ok = (a.recovered - v / 2.0).abs() <= cfg.mu_tol && (b.recovered - 0.75 * v).abs() <= cfg.mu_tol;
    let cos = line(256);
    let cache = SigmaCache::new(cos.clone(), EigConfig::default());
    let s = |l: &[f64]| cache.sigma(l);
    let c = s(&[0.0]).unwrap();
    let direct = (s(&[0.3]).unwrap() - 0.045).min(c);
    let r = inverse_r_check(&s, &[0.3], c, Some(cos.v_max()), &cfg).unwrap();
    let gap = rel(r.recovered, direct);
    Outcome {
        passed: const_ok && gap < 2e-2,
        detail: format!(
            "constant: {} and {} (mu resolution {:.0e}); cosine {:.6} vs {direct:.6}",
            a.recovered, b.recovered, cfg.mu_tol, r.recovered
        ),
        record: json!([a.recovered, b.recovered, r.recovered]),
    }
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("constant-potential exactness", Some(Duration::from_secs(60)), c1_constant),
        ("root route vs R(sigma)", Some(Duration::from_secs(600)), c2_routes_agree),
        ("minimax equality", None, c3_minimax),
        ("projection duality", None, c4_projection),
        ("1D corrector closed form", None, c5_corrector_1d),
        ("H bounds", None, c6_h_bounds),
        ("sigma structure", None, c7_sigma_structure),
        ("variational vs spectral sigma", None, c8_sigma_routes),
        ("comparison with the averaged potential", None, c9_comparison),
        ("Monte Carlo", Some(Duration::from_secs(600)), c10_monte_carlo),
        ("homogeneity", None, c11_homogeneity),
        ("inverse-R recovery", None, c12_inverse_r),
    ];
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let multi = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let mut failures = 0;
    let mut identical = true;
    let mut mismatched = Vec::new();
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let a = single.install(run);
        let elapsed = t.elapsed();
        let b = multi.install(run);
        let same = serde_json::to_string(&a.record).unwrap() == serde_json::to_string(&b.record).unwrap();
        if !same {
            identical = false;
            mismatched.push(i + 1);
        }
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let passed = a.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{:.1}s]",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            a.detail,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "criterion 13 {} determinism: records identical on 1 and 3 workers{}",
        if identical { "PASS" } else { "FAIL" },
        if identical { String::new() } else { format!(", mismatch in {mismatched:?}") }
    );
    if !identical {
        failures += 1;
    }
    println!("acceptance: {} of 13 criteria passed", 13 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
