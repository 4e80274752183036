use std::collections::BTreeMap;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::stats::Summary;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    /// Distance to the threshold, positive when passing.
    pub margin: f64,
    /// The pass rule in words.
    pub rule: String,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64, rule: &str) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            margin: threshold - value,
            rule: rule.into(),
        }
    }

    /// A yes/no condition; `value` and `threshold` carry the compared numbers.
    pub fn flag(name: &str, passed: bool, value: f64, threshold: f64, rule: &str) -> Self {
        Self { name: name.into(), passed, value, threshold, margin: threshold - value, rule: rule.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    /// Feeding these entries back as a config file reproduces the report.
    pub config: BTreeMap<String, String>,
}

impl Provenance {
    pub fn of(config: &ExperimentConfig) -> Self {
        Self {
            config_hash: config.hash(),
            seeds: config.seeds.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.canonical(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub quantities: BTreeMap<String, Summary<f64>>,
    pub values: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        Self {
            experiment: experiment.into(),
            quantities: BTreeMap::new(),
            values: BTreeMap::new(),
            checks: Vec::new(),
            warnings: Vec::new(),
            provenance: Provenance::of(config),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn quantity(&mut self, key: impl Into<String>, summary: Summary<f64>) {
        self.quantities.insert(key.into(), summary);
    }

    pub fn value(&mut self, key: impl Into<String>, v: f64) {
        self.values.insert(key.into(), v);
    }

    /// Folds another report in, prefixing its keys and check names.
    pub fn absorb(&mut self, other: ExperimentReport) {
        let prefix = other.experiment;
        for (k, v) in other.quantities {
            self.quantities.insert(format!("{prefix}.{k}"), v);
        }
        for (k, v) in other.values {
            self.values.insert(format!("{prefix}.{k}"), v);
        }
        for mut c in other.checks {
            c.name = format!("{prefix}.{}", c.name);
            self.checks.push(c);
        }
        self.warnings.extend(other.warnings.into_iter().map(|w| format!("{prefix}: {w}")));
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Io(e.to_string()))
    }
}
