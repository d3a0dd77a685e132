//! Artifacts loaded once at startup and shared read-only: both fitted
//! models, the raw training reference cohort and the reference ranges.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use vdpt_core::artifact::load_model;
use vdpt_core::data::{load_csv, Cohort, LABEL_COLUMN};
use vdpt_core::drift::{drift_report, DriftOptions, DriftReport};
use vdpt_core::influence::{fi_local, InfluenceConfig, Objective};
use vdpt_core::model::{FittedModel, ModelKind};
use vdpt_core::numeric::stats::{mean, quantile_sorted, sorted_copy, std_dev};

use crate::error::{Result, ServiceError};
use crate::ranges::ReferenceRanges;
use crate::record::{toward_mortality, Explanation, ModelOutput, ModelOutputs};

pub const MLP_ARTIFACT: &str = "mlp.json";
pub const VDP_ARTIFACT: &str = "vdp.json";
pub const REFERENCE_CSV: &str = "reference.csv";
pub const RANGES_FILE: &str = "ranges.json";
pub const STATS_FORMAT: &str = "vdpt.training_stats.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub feature: String,
    pub unit: String,
    /// Observed (non-missing) values.
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub healthy_low: f64,
    pub healthy_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub format: String,
    pub n_rows: usize,
    pub prevalence: f64,
    pub features: Vec<FeatureStats>,
}

/// Per-feature summary of the raw training reference. Quartiles use linear
/// interpolation between order statistics.
pub fn training_stats(reference: &Cohort, ranges: &ReferenceRanges) -> Result<TrainingStats> {
    ranges.covers(&reference.feature_names)?;
    let features = reference
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let values = reference.observed(j);
            let sorted = sorted_copy(&values);
            let range = &ranges.features[name];
            let q = |p: f64| if sorted.is_empty() { f64::NAN } else { quantile_sorted(&sorted, p) };
            FeatureStats {
                feature: name.clone(),
                unit: range.unit.clone(),
                n: values.len(),
                mean: mean(&values),
                std: if values.len() > 1 { std_dev(&values, 1) } else { f64::NAN },
                q1: q(0.25),
                median: q(0.5),
                q3: q(0.75),
                healthy_low: range.low,
                healthy_high: range.high,
            }
        })
        .collect();
    Ok(TrainingStats {
        format: STATS_FORMAT.into(),
        n_rows: reference.n_rows(),
        prevalence: reference.prevalence(),
        features,
    })
}

struct Scorer {
    model: FittedModel,
    objective: Objective,
    /// Training reference after the model's own imputation and scaling.
    training: Cohort,
}

impl Scorer {
    fn new(model: FittedModel, reference: &Cohort) -> Result<Self> {
        let training = model.prepare(reference)?;
        let objective = Objective::from_model(&model, training.n_rows());
        Ok(Self {
            model,
            objective,
            training,
        })
    }

    fn score(&self, raw: &Cohort, influence: &InfluenceConfig) -> Result<ModelOutput> {
        let p = self.model.predict(raw)?[0];
        let prepared = self.model.prepare(raw)?;
        let report = fi_local(&self.objective, prepared.x.row(0), &self.training, influence, None)?;
        Ok(ModelOutput {
            probability: p.probability,
            predicted_label: report.test_label,
            variance: p.variance,
            confidence: p.confidence,
            explanation: Explanation {
                toward_mortality: toward_mortality(&report),
                report,
            },
        })
    }
}

pub struct Models {
    vdp: Scorer,
    mlp: Scorer,
    reference: Cohort,
    ranges: ReferenceRanges,
    stats: TrainingStats,
}

impl Models {
    pub fn new(vdp: FittedModel, mlp: FittedModel, reference: Cohort, ranges: ReferenceRanges) -> Result<Self> {
        if vdp.kind() != ModelKind::Vdp || mlp.kind() != ModelKind::Mlp {
            return Err(vdpt_core::Error::SchemaMismatch("expected one vdp and one mlp artifact".into()).into());
        }
        if vdp.feature_names != mlp.feature_names {
            return Err(vdpt_core::Error::SchemaMismatch("the two models were trained on different features".into()).into());
        }
        ranges.validate()?;
        let stats = training_stats(&reference, &ranges)?;
        Ok(Self {
            vdp: Scorer::new(vdp, &reference)?,
            mlp: Scorer::new(mlp, &reference)?,
            reference,
            ranges,
            stats,
        })
    }

    /// Loads `vdp.json`, `mlp.json`, `reference.csv` and `ranges.json` from
    /// one directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::new(
            load_model(dir.join(VDP_ARTIFACT))?,
            load_model(dir.join(MLP_ARTIFACT))?,
            load_csv(dir.join(REFERENCE_CSV), LABEL_COLUMN)?,
            ReferenceRanges::load(dir.join(RANGES_FILE))?,
        )
    }

    pub fn feature_names(&self) -> &[String] {
        &self.reference.feature_names
    }

    pub fn model(&self, kind: ModelKind) -> &FittedModel {
        match kind {
            ModelKind::Vdp => &self.vdp.model,
            ModelKind::Mlp => &self.mlp.model,
        }
    }

    pub fn reference(&self) -> &Cohort {
        &self.reference
    }

    pub fn ranges(&self) -> &ReferenceRanges {
        &self.ranges
    }

    pub fn stats(&self) -> &TrainingStats {
        &self.stats
    }

    /// Checks a submitted feature map: every model feature present, no
    /// extras, each inside its plausibility bounds. Returns values in model
    /// order.
    pub fn validate_features(&self, features: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let names = self.feature_names();
        if let Some(extra) = features.keys().find(|k| !names.contains(k)) {
            return Err(ServiceError::BadRequest(format!("unknown feature `{extra}`")));
        }
        names
            .iter()
            .map(|name| {
                let v = *features
                    .get(name)
                    .ok_or_else(|| ServiceError::BadRequest(format!("missing feature `{name}`")))?;
                let (lo, hi) = self.ranges.features[name].plausible_bounds();
                if !(lo..=hi).contains(&v) {
                    return Err(ServiceError::BadRequest(format!("`{name}` = {v} outside plausible bounds [{lo}, {hi}]")));
                }
                Ok(v)
            })
            .collect()
    }

    /// Runs both models and both explanations on one raw row.
    pub fn score(&self, values: &[f64], influence: &InfluenceConfig) -> Result<ModelOutputs> {
        let x = Array2::from_shape_vec((1, values.len()), values.to_vec())
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let raw = Cohort::new(self.feature_names().to_vec(), x, vec![0])?;
        Ok(ModelOutputs {
            vdp: self.vdp.score(&raw, influence)?,
            mlp: self.mlp.score(&raw, influence)?,
        })
    }

    /// Compares `current` (raw, labelled by outcome) against the training
    /// reference, including the VDP confidence distribution.
    pub fn drift(&self, current: &Cohort) -> Result<DriftReport> {
        Ok(drift_report(&self.reference, current, Some(&self.vdp.model), &DriftOptions::default())?)
    }
}
