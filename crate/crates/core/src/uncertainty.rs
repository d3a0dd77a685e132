//! Confidence scores from predictive variance: `1 − F(σ²)` where `F` is the
//! empirical distribution of training-set variances.

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::vdp::VdpParams;

pub const MIN_CDF_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCdf {
    /// Ascending.
    pub values: Vec<f64>,
}

impl VarianceCdf {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_CDF_SAMPLES {
            return Err(Error::TooFewSamples {
                needed: MIN_CDF_SAMPLES,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::DegenerateInput("variances must be finite and non-negative".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Interpolated empirical CDF with plotting positions `rank/(n+1)`;
    /// 0 below the smallest value, 1 above the largest. Tied values take
    /// their highest rank.
    pub fn cdf(&self, variance: f64) -> f64 {
        let v = &self.values;
        let n = v.len();
        if n == 0 || variance < v[0] {
            return 0.0;
        }
        if variance > v[n - 1] {
            return 1.0;
        }
        // number of stored values ≤ variance, at least 1 here
        let k = v.partition_point(|&x| x <= variance);
        let lo = v[k - 1];
        let pos = k as f64 / (n + 1) as f64;
        if lo == variance || k == n {
            return pos;
        }
        let hi = v[k];
        pos + (variance - lo) / (hi - lo) / (n + 1) as f64
    }

    /// `1 − cdf(σ²)`: 1 is most certain.
    pub fn confidence(&self, variance: f64) -> f64 {
        1.0 - self.cdf(variance)
    }
}

/// Predictive variances of every row of a prepared (imputed, standardized)
/// training split, sorted.
pub fn fit_variance_cdf(model: &VdpParams, cohort: &Cohort) -> Result<VarianceCdf> {
    let preds = model.predict_batch(cohort.x.view())?;
    VarianceCdf::from_values(preds.iter().map(|p| p.variance).collect())
}

pub fn confidence(cdf: &VarianceCdf, variance: f64) -> f64 {
    cdf.confidence(variance)
}
