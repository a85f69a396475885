//! Machine-readable verdicts and experiment reports.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// Outcome of one check: `statistic` compared against `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub name: String,
    pub params: Value,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
}

impl Check {
    /// Passes when `statistic >= threshold`.
    pub fn at_least(name: &str, params: Value, statistic: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            params,
            statistic,
            threshold,
            pass: statistic >= threshold,
            witness: None,
        }
    }

    /// Passes when `statistic <= threshold`.
    pub fn at_most(name: &str, params: Value, statistic: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            params,
            statistic,
            threshold,
            pass: statistic <= threshold,
            witness: None,
        }
    }

    pub fn with_witness(mut self, witness: Value) -> Self {
        self.witness = Some(witness);
        self
    }

    /// Forces failure (e.g. when a secondary condition of the check fails).
    pub fn and(mut self, ok: bool) -> Self {
        self.pass &= ok;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedLedger {
    pub master_seed: u64,
    pub derivation_rule: String,
    #[serde(default)]
    pub ensemble_seeds: Vec<u64>,
}

/// Top-level `report.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config: Value,
    pub seed_ledger: SeedLedger,
    pub checks: Vec<Check>,
    #[serde(default)]
    pub statistics: Value,
    pub artifacts: Vec<String>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub wall_ms: u64,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}
