//! Structured pass/fail records shared by the certification routines and
//! serialized by the CLI.

use serde::{Deserialize, Serialize};

/// A pass/fail record with witness data.  `passed` must be consistent with
/// `min_value >= -tolerance` whenever a minimum is the certified quantity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertReport {
    pub passed: bool,
    pub min_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmin: Option<Vec<usize>>,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_echo: serde_json::Value,
}

impl CertReport {
    pub fn new(min_value: f64, tolerance: f64) -> CertReport {
        CertReport {
            passed: min_value >= -tolerance,
            min_value,
            argmin: None,
            tolerance,
            seed: None,
            config_echo: serde_json::Value::Null,
        }
    }

    pub fn with_argmin(mut self, argmin: Vec<usize>) -> CertReport {
        self.argmin = Some(argmin);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> CertReport {
        self.seed = Some(seed);
        self
    }

    pub fn with_config(mut self, config: serde_json::Value) -> CertReport {
        self.config_echo = config;
        self
    }

    /// Marks the report failed regardless of the minimum, for clauses that
    /// certify more than a signed minimum.
    pub fn force_failed(mut self) -> CertReport {
        self.passed = false;
        self
    }
}

/// Extremes of the ratio of an iterated positive image against the
/// reference function over interior simplex points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub k: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub interior_rule: String,
    pub passed: bool,
    pub exploratory: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}
