//! Operator-supplied healthy ranges. They drive the input hints and the hard
//! plausibility bounds on submitted values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const RANGES_FORMAT: &str = "vdpt.reference_ranges.v1";
/// Plausible values lie within this many range widths of the healthy range.
pub const PLAUSIBILITY_SPANS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub low: f64,
    pub high: f64,
    pub unit: String,
}

impl Range {
    pub fn plausible_bounds(&self) -> (f64, f64) {
        let span = self.high - self.low;
        (self.low - PLAUSIBILITY_SPANS * span, self.high + PLAUSIBILITY_SPANS * span)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRanges {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub features: BTreeMap<String, Range>,
}

impl ReferenceRanges {
    pub fn from_json(text: &str) -> Result<Self> {
        let ranges: ReferenceRanges = serde_json::from_str(text)?;
        ranges.validate()?;
        Ok(ranges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != RANGES_FORMAT {
            return Err(ServiceError::InvalidRanges(format!("format `{}`, expected `{RANGES_FORMAT}`", self.format)));
        }
        for (name, r) in &self.features {
            if !(r.low.is_finite() && r.high.is_finite() && r.low < r.high) {
                return Err(ServiceError::InvalidRanges(format!("`{name}` needs finite low < high")));
            }
        }
        Ok(())
    }

    /// Every model feature must have a range.
    pub fn covers(&self, feature_names: &[String]) -> Result<()> {
        let missing: Vec<&str> = feature_names
            .iter()
            .filter(|f| !self.features.contains_key(*f))
            .map(String::as_str)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ServiceError::InvalidRanges(format!("no range for {missing:?}")))
        }
    }
}
