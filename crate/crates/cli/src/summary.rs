use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// The JSON Schema every emitted summary conforms to.
pub const RESULT_SUMMARY_SCHEMA: &str = include_str!("../schemas/result_summary.schema.json");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_learned: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rkhs_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_learned: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_learned: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_ratio: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub experiment: String,
    /// Resolved parameters, defaults included.
    pub parameters: Value,
    pub metrics: Metrics,
    /// Artifact name to path.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}
