//! The spectral route: `sigma(lambda) = -Lambda(lambda)` with `Lambda` the
//! principal eigenvalue of `Delta / 2 + lambda . grad - V` on the torus, and
//! the R-transform `R(a)(y) = sup{<y, lambda> : |lambda|^2 / 2 < a(lambda)}`
//! that turns it into a decay rate.

mod eigen;
mod rtransform;

use std::collections::BTreeMap;
use std::sync::Arc;

use dashmap::DashMap;

pub use eigen::{principal_eigenvalue, EigConfig, EigMethod, EigResult};
pub use rtransform::{
    inverse_r_check, lipschitz_check, r_transform, DirectionRoot, InverseRCheck, LipschitzPair,
    LipschitzReport, RConfig, RTransformResult,
};

use crate::error::Result;
use crate::functionals::{Route, SigmaValue};
use crate::potential::PotentialField;

/// `sigma(lambda) = -Lambda(lambda)`.
pub fn sigma_spectral(v: &PotentialField, lambda: &[f64], cfg: &EigConfig) -> Result<SigmaValue> {
    let r = principal_eigenvalue(v, lambda, cfg)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("iterations".into(), r.iterations as f64);
    diagnostics.insert("residual".into(), r.residual);
    Ok(SigmaValue {
        lambda: lambda.to_vec(),
        value: -r.principal_value,
        route: Route::Spectral,
        diagnostics,
    })
}

/// Resolution of the cache key in `lambda`.
pub const LAMBDA_QUANTUM: f64 = 1e-6;

type Key = (u64, [i64; 2]);

/// `sigma` on a lattice of spacing [`LAMBDA_QUANTUM`] in `lambda`, memoized.
///
/// A query is answered at the nearest lattice point, so values do not depend
/// on the order in which points are requested.
#[derive(Clone)]
pub struct SigmaCache {
    potential: Arc<PotentialField>,
    fingerprint: u64,
    cfg: EigConfig,
    map: Arc<DashMap<Key, f64>>,
}

impl SigmaCache {
    pub fn new(potential: PotentialField, cfg: EigConfig) -> Self {
        let mut h = potential.fingerprint();
        // fold the solver settings into the key
        for bits in [cfg.tol.to_bits(), cfg.gmres_tol.to_bits(), cfg.method as u64] {
            h = h.rotate_left(17) ^ bits;
        }
        Self {
            fingerprint: h,
            potential: Arc::new(potential),
            cfg,
            map: Arc::new(DashMap::new()),
        }
    }

    pub fn potential(&self) -> &PotentialField {
        &self.potential
    }

    pub fn config(&self) -> &EigConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn sigma(&self, lambda: &[f64]) -> Result<f64> {
        let mut q = [0i64; 2];
        for (qi, l) in q.iter_mut().zip(lambda) {
            *qi = (l / LAMBDA_QUANTUM).round() as i64;
        }
        let key = (self.fingerprint, q);
        if let Some(v) = self.map.get(&key) {
            return Ok(*v);
        }
        let snapped: Vec<f64> = q[..lambda.len()].iter().map(|&k| k as f64 * LAMBDA_QUANTUM).collect();
        let value = -principal_eigenvalue(&self.potential, &snapped, &self.cfg)?.principal_value;
        self.map.insert(key, value);
        Ok(value)
    }
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            v.serialize(s)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{realize, PotentialSpec};
    use crate::torus_field::TorusGrid;
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "extended_float")] f64);

    #[test]
    fn spectral_sigma_examples() {
        let g = TorusGrid::line(64, 1.0).unwrap();
        let c = realize(&PotentialSpec::constant(0.3), &g).unwrap();
        let s = sigma_spectral(&c, &[2.0], &EigConfig::default()).unwrap();
        assert!((s.value - 0.3).abs() < 1e-12);
        assert_eq!(s.route, Route::Spectral);
        let g2 = TorusGrid::square(32, 1.0).unwrap();
        let board = realize(&PotentialSpec::chessboard(4, 0.0, 2.0, 7, 0.05).with_floor(0.1), &g2).unwrap();
        let s = sigma_spectral(&board, &[0.0, 0.0], &EigConfig::default()).unwrap();
        assert!(s.value >= 0.1 - 1e-6 && s.value <= board.v_max());
    }

    #[test]
    fn variational_and_spectral_sigma_agree() {
        let g = TorusGrid::line(128, 1.0).unwrap();
        let v = realize(&PotentialSpec::cosine(1.0), &g).unwrap();
        let spec = sigma_spectral(&v, &[0.0], &EigConfig::default()).unwrap().value;
        let var = crate::functionals::sigma_variational(&v, &[0.0], &Default::default()).unwrap().value;
        assert!(((var - spec) / spec).abs() < 1e-3, "{var} vs {spec}");
        assert!(var >= spec - 1e-9);
    }

    #[test]
    fn cache_snaps_to_lattice() {
        let g = TorusGrid::line(32, 1.0).unwrap();
        let v = realize(&PotentialSpec::cosine(1.0), &g).unwrap();
        let cache = SigmaCache::new(v.clone(), EigConfig::default());
        let a = cache.sigma(&[0.5 + 2e-7]).unwrap();
        let b = cache.sigma(&[0.5 - 2e-7]).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.len(), 1);
        let direct = sigma_spectral(&v, &[0.5], &EigConfig::default()).unwrap().value;
        assert_eq!(a, direct);
    }

    #[test]
    fn extended_floats_round_trip() {
        for x in [1.5, f64::NEG_INFINITY, f64::INFINITY] {
            let s = serde_json::to_string(&Wrapped(x)).unwrap();
            let back: Wrapped = serde_json::from_str(&s).unwrap();
            assert_eq!(back.0, x);
        }
        assert_eq!(serde_json::to_string(&Wrapped(f64::NEG_INFINITY)).unwrap(), "\"-inf\"");
    }
}
