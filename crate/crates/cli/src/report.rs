use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub context: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub phases: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub command: String,
    pub config: Option<RunConfig>,
    pub results: BTreeMap<String, Value>,
    pub gaps: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub errors: Vec<ErrorEntry>,
    /// Wall-clock data; the only part excluded from the determinism hash.
    pub timing: Timing,
}

impl Report {
    pub fn new(command: &str, config: Option<RunConfig>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            results: BTreeMap::new(),
            gaps: BTreeMap::new(),
            checks: Vec::new(),
            errors: Vec::new(),
            timing: Timing::default(),
        }
    }

    pub fn result<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("results serialize");
        self.results.insert(key.to_string(), v);
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn error(&mut self, context: impl Into<String>, e: &lyapvar_core::Error) {
        self.errors.push(ErrorEntry {
            context: context.into(),
            code: e.code().to_string(),
            message: e.to_string(),
        });
    }

    /// SHA-256 of the report with the timing field removed.
    pub fn determinism_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timing");
        }
        let bytes = serde_json::to_vec(&v).expect("report serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(dir.join("report.json"), text + "\n")
    }

    pub fn failed_checks(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}
