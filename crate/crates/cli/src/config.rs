//! Run configuration, read from TOML. See `docs/config.md` for the schema.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use lyapvar_core::gamma::GammaConfig;
use lyapvar_core::spectral::{EigConfig, RConfig};
use lyapvar_core::{realize, PotentialField, PotentialSpec, TorusGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    #[serde(default = "unit_period")]
    pub period: f64,
}

fn unit_period() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltChoice {
    None,
    /// `f = 1`, `a = sqrt(2 E[V])`.
    Uniform,
    /// The minimizing density and the decay rate from the root route.
    Gamma,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub t_horizon: f64,
    pub dt: f64,
    pub npaths: usize,
    pub survival: bool,
    pub r_list: Vec<f64>,
    pub survival_npaths: usize,
    pub survival_dt: f64,
    pub t_max: f64,
    pub log_cutoff: f64,
    pub min_survivors: usize,
    pub tilt: TiltChoice,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            t_horizon: 20.0,
            dt: 1e-3,
            npaths: 10_000,
            survival: true,
            r_list: vec![4.0, 6.0, 8.0, 10.0],
            survival_npaths: 10_000,
            survival_dt: 1e-3,
            t_max: 1000.0,
            log_cutoff: -60.0,
            min_survivors: 100,
            tilt: TiltChoice::Gamma,
        }
    }
}

/// Tolerances of the property checks recorded in every report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Relative agreement between the root route and R(sigma).
    pub route_tol: f64,
    /// Relative gap between the inf-sup and sup-inf values.
    pub minimax_tol: f64,
    /// Relative agreement between variational and spectral sigma.
    pub sigma_tol: f64,
    /// Monte Carlo agreement in standard errors.
    pub mc_sigmas: f64,
    /// Relative agreement of the survival slope with the root route.
    pub slope_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            route_tol: 2e-2,
            minimax_tol: 1e-2,
            sigma_tol: 1e-3,
            mc_sigmas: 3.0,
            slope_tol: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; not echoed, so reports do not depend on it.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    pub grid: GridConfig,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub y: Vec<Vec<f64>>,
    #[serde(default)]
    pub lambda: Vec<Vec<f64>>,
    #[serde(default)]
    pub gamma: GammaConfig,
    #[serde(default)]
    pub eigen: EigConfig,
    #[serde(default)]
    pub rtransform: RConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub checks: CheckConfig,
}

/// Keys of a potential table besides those of its kind.
const POTENTIAL_KEYS: [&str; 5] = ["kind", "seed", "mollify_eps", "floor", "cap"];

fn kind_keys(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "constant" => &["value"],
        "cosine" => &["mean"],
        "chessboard" => &["cells", "lo", "hi"],
        "shot_noise" => &["rate", "amplitude", "radius"],
        _ => return None,
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        // the flattened potential table cannot reject unknown keys itself
        if let Some(toml::Value::Table(p)) = table.get("potential") {
            let kind = p
                .get("kind")
                .and_then(|k| k.as_str())
                .ok_or("potential.kind is missing")?;
            let allowed: BTreeSet<&str> = POTENTIAL_KEYS
                .iter()
                .chain(kind_keys(kind).ok_or(format!("unknown potential kind `{kind}`"))?)
                .copied()
                .collect();
            if let Some(bad) = p.keys().find(|k| !allowed.contains(k.as_str())) {
                return Err(format!("unknown key `potential.{bad}`"));
            }
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), String> {
        let d = self.grid.dim;
        for (name, list) in [("y", &self.y), ("lambda", &self.lambda)] {
            if let Some(v) = list.iter().find(|v| v.len() != d) {
                return Err(format!("{name} entry {v:?} does not have {d} components"));
            }
        }
        if self.mc.r_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err("mc.r_list must be increasing".into());
        }
        self.grid()?;
        self.potential.validate(&self.grid()?).map_err(|e| e.to_string())?;
        self.gamma.opt.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TorusGrid, String> {
        TorusGrid::new(self.grid.dim, self.grid.n, &vec![self.grid.period; self.grid.dim]).map_err(|e| e.to_string())
    }

    pub fn realize(&self) -> lyapvar_core::Result<PotentialField> {
        let grid = self.grid().map_err(lyapvar_core::Error::Parameter)?;
        realize(&self.potential, &grid)
    }

    /// The global seed replaces the optimizer seed.
    pub fn gamma_config(&self) -> GammaConfig {
        let mut g = self.gamma;
        g.opt.seed = self.seed;
        g
    }
}
