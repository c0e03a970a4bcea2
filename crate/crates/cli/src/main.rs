//! `lyapvar <subcommand> --config <path> [--seed N] [--workers N] [--out DIR]`
//!
//! Exit codes: 0 success, 2 a property check failed, 3 a solver failed,
//! 4 the configuration is invalid.

mod commands;
mod config;
mod report;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use commands::Context;
use config::RunConfig;
use report::Report;

#[derive(Parser)]
#[command(name = "lyapvar", version, about = "Lyapunov exponents of Brownian motion in periodic potentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration (optional for `selftest`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (default: `out` from the config, else `lyapvar-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Root, inf-sup and sup-inf routes for every y.
    Gamma,
    /// Spectral and variational sigma for every lambda.
    Sigma,
    /// R(sigma) for every y, Lipschitz and inverse checks.
    Rtransform,
    /// Variational routes, R(sigma) and the 1D survival slope.
    Lyapunov,
    /// Monte Carlo free energy and survival decay.
    Mc,
    /// Gamma_V against the averaged potential.
    CompareAverage,
    /// Cartesian sweep over the y and lambda lists into sweep.csv.
    Sweep,
    /// Built-in invariant suite.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gamma => "gamma",
            Command::Sigma => "sigma",
            Command::Rtransform => "rtransform",
            Command::Lyapunov => "lyapunov",
            Command::Mc => "mc",
            Command::CompareAverage => "compare-average",
            Command::Sweep => "sweep",
            Command::Selftest => "selftest",
        }
    }
}

const CONFIG_ERROR: u8 = 4;

fn exit_code(report: &Report) -> u8 {
    let config_codes = ["parameter", "domain"];
    if report.errors.iter().any(|e| !config_codes.contains(&e.code.as_str())) {
        3
    } else if !report.errors.is_empty() {
        CONFIG_ERROR
    } else if report.failed_checks() > 0 {
        2
    } else {
        0
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let name = cli.command.name();
    let cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(mut c) => {
                if let Some(s) = cli.seed {
                    c.seed = s;
                }
                Some(c)
            }
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(CONFIG_ERROR);
            }
        },
        None if matches!(cli.command, Command::Selftest) => None,
        None => {
            eprintln!("config error: --config is required for `{name}`");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("config error: invalid worker count {n}");
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("lyapvar-out"));
    let mut report = Report::new(name, cfg.clone());
    let mut tables = Vec::new();
    let compute = Instant::now();
    match (&cfg, cli.command) {
        (_, Command::Selftest) => selftest::run(&mut report, cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0)),
        (Some(cfg), cmd) => {
            let mut ctx = Context {
                cfg,
                report: &mut report,
                tables: Vec::new(),
            };
            match cmd {
                Command::Gamma => commands::run_gamma(&mut ctx),
                Command::Sigma => commands::run_sigma(&mut ctx),
                Command::Rtransform => commands::run_rtransform(&mut ctx),
                Command::Lyapunov => commands::run_lyapunov(&mut ctx),
                Command::Mc => commands::run_mc(&mut ctx),
                Command::CompareAverage => commands::run_compare(&mut ctx),
                Command::Sweep => commands::run_sweep(&mut ctx),
                Command::Selftest => unreachable!(),
            }
            tables = ctx.tables;
        }
        (None, _) => unreachable!("checked above"),
    }
    report.timing.phases.insert("compute".into(), compute.elapsed().as_secs_f64());
    report.timing.total_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = report.write(&out) {
        eprintln!("cannot write {}: {e}", out.display());
        return ExitCode::from(3);
    }
    for t in &tables {
        if let Err(e) = t.write(&out) {
            eprintln!("cannot write {}.csv: {e}", t.name);
            return ExitCode::from(3);
        }
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} ({})", c.name, c.detail);
    }
    for e in &report.errors {
        eprintln!("error [{}] {}: {}", e.code, e.context, e.message);
    }
    println!("determinism hash: {}", report.determinism_hash());
    println!("report: {}", out.join("report.json").display());
    ExitCode::from(exit_code(&report))
}
