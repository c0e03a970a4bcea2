//! Nonnegative bounded potentials: deterministic benchmarks and periodized
//! random media with reproducible seeds.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus_field::{bump, convolve_periodic, ScalarField, TorusGrid};

/// The shape of a potential before truncation, mollification and flooring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `V = value` everywhere.
    Constant { value: f64 },
    /// `V = mean * prod_i (1 + cos(2 pi x_i / L_i))`.
    Cosine { mean: f64 },
    /// `cells^d` equal cells with i.i.d. uniform values on `[lo, hi]`.
    Chessboard { cells: usize, lo: f64, hi: f64 },
    /// Poisson number of bumps of height `amplitude` and radius `radius`.
    ShotNoise {
        rate: f64,
        amplitude: f64,
        radius: f64,
    },
}

/// Declarative description of a potential, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub kind: PotentialKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mollify_eps: f64,
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub cap: Option<f64>,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind) -> Self {
        Self {
            kind,
            seed: 0,
            mollify_eps: 0.0,
            floor: 0.0,
            cap: None,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(PotentialKind::Constant { value })
    }

    pub fn cosine(mean: f64) -> Self {
        Self::new(PotentialKind::Cosine { mean })
    }

    pub fn chessboard(cells: usize, lo: f64, hi: f64, seed: u64, mollify_eps: f64) -> Self {
        Self {
            seed,
            mollify_eps,
            ..Self::new(PotentialKind::Chessboard { cells, lo, hi })
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn validate(&self, grid: &TorusGrid) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        nonneg("floor", self.floor)?;
        nonneg("mollify_eps", self.mollify_eps)?;
        if let Some(cap) = self.cap {
            nonneg("cap", cap)?;
        }
        if self.mollify_eps >= 0.5 * grid.min_period() {
            return Err(Error::param(format!(
                "mollify_eps {} must be below half the smallest period",
                self.mollify_eps
            )));
        }
        match self.kind {
            PotentialKind::Constant { value } => nonneg("value", value)?,
            PotentialKind::Cosine { mean } => nonneg("mean", mean)?,
            PotentialKind::Chessboard { cells, lo, hi } => {
                nonneg("lo", lo)?;
                nonneg("hi", hi)?;
                if cells == 0 || hi < lo {
                    return Err(Error::param("chessboard needs cells >= 1 and lo <= hi"));
                }
                if self.mollify_eps <= 0.0 {
                    return Err(Error::param("chessboard potentials must be mollified"));
                }
            }
            PotentialKind::ShotNoise {
                rate,
                amplitude,
                radius,
            } => {
                nonneg("rate", rate)?;
                nonneg("amplitude", amplitude)?;
                if !(radius > 0.0 && radius < 0.5 * grid.min_period()) {
                    return Err(Error::param(
                        "shot-noise radius must lie in (0, half the smallest period)",
                    ));
                }
                if self.mollify_eps <= 0.0 {
                    return Err(Error::param("shot-noise potentials must be mollified"));
                }
            }
        }
        Ok(())
    }
}

/// A realized potential with its sup and mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    field: ScalarField,
    v_max: f64,
    v_mean: f64,
    spec: Option<PotentialSpec>,
}

impl PotentialField {
    /// Wraps an arbitrary nonnegative, not identically zero field.
    pub fn from_field(field: ScalarField, spec: Option<PotentialSpec>) -> Result<Self> {
        if field.min() < 0.0 {
            return Err(Error::Domain(format!(
                "potential must be nonnegative, min is {}",
                field.min()
            )));
        }
        let v_max = field.max();
        let v_mean = field.mean();
        if !(v_max > 0.0 && v_mean > 0.0) {
            return Err(Error::DegeneratePotential(
                "potential vanishes identically".into(),
            ));
        }
        Ok(Self {
            field,
            v_max,
            v_mean,
            spec,
        })
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn grid(&self) -> &TorusGrid {
        self.field.grid()
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn v_mean(&self) -> f64 {
        self.v_mean
    }

    pub fn v_min(&self) -> f64 {
        self.field.min()
    }

    pub fn spec(&self) -> Option<&PotentialSpec> {
        self.spec.as_ref()
    }

    pub fn is_constant(&self) -> bool {
        self.v_max - self.field.min() <= 1e-14 * self.v_max
    }

    /// Hash of the grid and the exact bit patterns of the values.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let g = self.grid();
        (g.dim(), g.n()).hash(&mut h);
        for l in g.periods() {
            l.to_bits().hash(&mut h);
        }
        for v in self.field.values() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Builds the field described by `spec` on `grid`.
///
/// Order of operations: raw shape, optional truncation at `cap`, periodic
/// mollification, then the pointwise `floor`.
pub fn realize(spec: &PotentialSpec, grid: &TorusGrid) -> Result<PotentialField> {
    spec.validate(grid)?;
    let mut field = shape_field(spec, grid)?;
    if let Some(cap) = spec.cap {
        field = field.map(|v| v.min(cap));
    }
    if spec.mollify_eps > 0.0 {
        field = convolve_periodic(&field, spec.mollify_eps)?.map(|v| v.max(0.0));
    }
    if spec.floor > 0.0 {
        field = field.map(|v| v + spec.floor);
    }
    PotentialField::from_field(field, Some(spec.clone()))
}

fn shape_field(spec: &PotentialSpec, grid: &TorusGrid) -> Result<ScalarField> {
    let grid = *grid;
    let field = match spec.kind {
        PotentialKind::Constant { value } => ScalarField::constant(grid, value),
        PotentialKind::Cosine { mean } => ScalarField::from_fn(grid, |x| {
            (0..grid.dim())
                .map(|a| 1.0 + (2.0 * PI * x[a] / grid.period(a)).cos())
                .product::<f64>()
                * mean
        }),
        PotentialKind::Chessboard { cells, lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let count = cells.pow(grid.dim() as u32);
            let values: Vec<f64> = (0..count).map(|_| rng.random_range(lo..=hi)).collect();
            ScalarField::from_fn(grid, |x| {
                let mut cell = 0;
                for a in (0..grid.dim()).rev() {
                    let c = ((x[a] / grid.period(a) * cells as f64).floor() as usize).min(cells - 1);
                    cell = cell * cells + c;
                }
                values[cell]
            })
        }
        PotentialKind::ShotNoise {
            rate,
            amplitude,
            radius,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let expected = rate * grid.volume();
            let count = if expected > 0.0 {
                let p = Poisson::new(expected)
                    .map_err(|e| Error::param(format!("shot-noise rate: {e}")))?;
                p.sample(&mut rng) as usize
            } else {
                0
            };
            let centers: Vec<[f64; 2]> = (0..count)
                .map(|_| {
                    let mut c = [0.0; 2];
                    for (a, ca) in c.iter_mut().enumerate().take(grid.dim()) {
                        *ca = rng.random::<f64>() * grid.period(a);
                    }
                    c
                })
                .collect();
            ScalarField::from_fn(grid, |x| {
                amplitude
                    * centers
                        .iter()
                        .map(|&c| {
                            let d = grid.min_image(x, c);
                            bump((d[0] * d[0] + d[1] * d[1]).sqrt() / radius)
                        })
                        .sum::<f64>()
            })
        }
    };
    Ok(field)
}

/// The constant potential equal to the mean of `p`.
pub fn averaged(p: &PotentialField) -> PotentialField {
    let spec = PotentialSpec::constant(p.v_mean);
    PotentialField {
        field: ScalarField::constant(*p.grid(), p.v_mean),
        v_max: p.v_mean,
        v_mean: p.v_mean,
        spec: Some(spec),
    }
}
