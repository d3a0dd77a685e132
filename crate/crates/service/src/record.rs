use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use vdpt_core::influence::InfluenceReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClinicianPrediction {
    Survive,
    Die,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Survived,
    Died,
}

impl Outcome {
    pub fn label(self) -> u8 {
        match self {
            Outcome::Survived => 0,
            Outcome::Died => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Raw influence values, loss-change sense.
    pub report: InfluenceReport,
    /// Same magnitudes, signed so that positive pushes toward mortality.
    pub toward_mortality: Vec<f64>,
}

/// Maps the loss-change sign of an explanation to class sentiment: the sign
/// flips when the explained label is survival.
pub fn toward_mortality(report: &InfluenceReport) -> Vec<f64> {
    let sign = if report.test_label == 1 { 1.0 } else { -1.0 };
    report.values.iter().map(|v| sign * v).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub probability: f64,
    pub predicted_label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub explanation: Explanation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutputs {
    pub vdp: ModelOutput,
    pub mlp: ModelOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    /// Milliseconds since the Unix epoch.
    pub created_ms: u64,
    /// Raw clinical units.
    pub features: BTreeMap<String, f64>,
    pub clinician_prediction: ClinicianPrediction,
    pub outputs: ModelOutputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

/// A record before the store assigns its id.
#[derive(Debug, Clone, PartialEq)]
pub struct NewRecord {
    pub created_ms: u64,
    pub features: BTreeMap<String, f64>,
    pub clinician_prediction: ClinicianPrediction,
    pub outputs: ModelOutputs,
    pub cohort: Option<String>,
    pub idempotency_key: Option<String>,
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
