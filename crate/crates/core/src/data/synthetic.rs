//! Synthetic ICU cohort generator.
//!
//! Twelve features in clinical units drawn from independent marginals (the
//! three GCS components share a latent severity). Labels follow a logistic
//! ground truth that is linear in lactate, age, GCS total and albumin, with
//! coefficients read from the versioned `config/synthetic_cohort_v1.json`.
//! The intercept is solved by bisection so the expected prevalence on the
//! drawn sample equals the target exactly.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use crate::error::{Error, Result};
use crate::numeric::stats::normal_cdf;
use crate::numeric::SeededRng;

const DEFAULT_CONFIG: &str = include_str!("../../config/synthetic_cohort_v1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    Normal {
        mean: f64,
        sd: f64,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    Lognormal {
        median: f64,
        sigma: f64,
    },
    Bernoulli {
        p: f64,
    },
    /// Glasgow Coma Scale component, integer in `1..=max`.
    Gcs {
        max: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
    pub dist: Marginal,
    #[serde(default)]
    pub always_observed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub format: String,
    pub features: Vec<FeatureSpec>,
    pub default_cohort: DefaultCohort,
    pub gcs_latent_loading: f64,
    /// Raw-unit log-odds coefficients; `gcs_sum` applies to the total of all
    /// GCS components.
    pub log_odds: BTreeMap<String, f64>,
}

/// Size, prevalence, missingness and seed of the reference cohort used for
/// end-to-end evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefaultCohort {
    pub n: usize,
    pub prevalence: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

/// Distribution shift applied at generation time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Additive mean shift per feature, in units of the feature's population
    /// standard deviation.
    #[serde(default)]
    pub mean_shifts: BTreeMap<String, f64>,
    /// Overrides the requested prevalence.
    #[serde(default)]
    pub prevalence: Option<f64>,
}

impl ShiftSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn shift(mut self, feature: &str, sigmas: f64) -> Self {
        self.mean_shifts.insert(feature.to_string(), sigmas);
        self
    }

    pub fn with_prevalence(mut self, prevalence: f64) -> Self {
        self.prevalence = Some(prevalence);
        self
    }
}

const GCS_OFFSET: f64 = 0.3;
const GCS_SPREAD: f64 = 2.5;

fn gcs_value(latent: f64, max: u8) -> f64 {
    let scale = (max as f64 - 1.0) / GCS_SPREAD;
    let deficit = ((latent + GCS_OFFSET).max(0.0) * scale).round();
    (max as f64 - deficit.min(max as f64 - 1.0)).max(1.0)
}

/// Exact mean and standard deviation of a GCS component whose latent is N(0,1).
fn gcs_moments(max: u8) -> (f64, f64) {
    let scale = (max as f64 - 1.0) / GCS_SPREAD;
    let top = max as usize - 1;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for k in 0..=top {
        let lo = if k == 0 {
            f64::NEG_INFINITY
        } else {
            (k as f64 - 0.5) / scale - GCS_OFFSET
        };
        let hi = if k == top {
            f64::INFINITY
        } else {
            (k as f64 + 0.5) / scale - GCS_OFFSET
        };
        let p = normal_cdf(hi) - normal_cdf(lo);
        let v = max as f64 - k as f64;
        m1 += p * v;
        m2 += p * v * v;
    }
    (m1, (m2 - m1 * m1).sqrt())
}

impl Marginal {
    /// Population standard deviation, the unit for mean shifts.
    pub fn population_sd(&self) -> f64 {
        match *self {
            Marginal::Normal { sd, .. } => sd,
            Marginal::Lognormal { median, sigma } => {
                let s2 = sigma * sigma;
                ((s2.exp() - 1.0) * (2.0 * median.ln() + s2).exp()).sqrt()
            }
            Marginal::Bernoulli { p } => (p * (1.0 - p)).sqrt(),
            Marginal::Gcs { max } => gcs_moments(max).1,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Marginal::Bernoulli { .. })
    }
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG).expect("bundled synthetic config parses")
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl SyntheticConfig {
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    fn is_gcs(&self, j: usize) -> bool {
        matches!(self.features[j].dist, Marginal::Gcs { .. })
    }

    /// Names of features that enter the ground-truth log-odds.
    pub fn active_features(&self) -> Vec<String> {
        self.features
            .iter()
            .enumerate()
            .filter(|(j, f)| {
                self.log_odds.contains_key(&f.name)
                    || (self.is_gcs(*j) && self.log_odds.contains_key("gcs_sum"))
            })
            .map(|(_, f)| f.name.clone())
            .collect()
    }

    pub fn binary_features(&self) -> Vec<String> {
        self.features
            .iter()
            .filter(|f| f.dist.is_binary())
            .map(|f| f.name.clone())
            .collect()
    }

    /// Ground-truth log-odds without the intercept for a raw feature row
    /// ordered as [`Self::feature_names`].
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        let mut eta = 0.0;
        let gcs_coef = self.log_odds.get("gcs_sum").copied().unwrap_or(0.0);
        for (j, f) in self.features.iter().enumerate() {
            if let Some(c) = self.log_odds.get(&f.name) {
                eta += c * row[j];
            }
            if self.is_gcs(j) {
                eta += gcs_coef * row[j];
            }
        }
        eta
    }

    fn validate(&self, shift: &ShiftSpec) -> Result<()> {
        for name in shift.mean_shifts.keys() {
            if !self.features.iter().any(|f| &f.name == name) {
                return Err(Error::InvalidSpec(format!("unknown feature `{name}` in shift")));
            }
        }
        for name in self.log_odds.keys() {
            if name != "gcs_sum" && !self.features.iter().any(|f| &f.name == name) {
                return Err(Error::InvalidSpec(format!("unknown feature `{name}` in log-odds")));
            }
        }
        Ok(())
    }

    /// Draws `n` raw rows (no labels, no missingness).
    pub fn draw_features(&self, n: usize, shift: &ShiftSpec, rng: &mut SeededRng) -> Result<Array2<f64>> {
        self.validate(shift)?;
        let d = self.features.len();
        let mut x = Array2::<f64>::zeros((n, d));
        let loading = self.gcs_latent_loading;
        let unique = (1.0 - loading * loading).max(0.0).sqrt();
        for i in 0..n {
            let severity = rng.normal();
            for (j, f) in self.features.iter().enumerate() {
                let delta = shift.mean_shifts.get(&f.name).copied().unwrap_or(0.0)
                    * f.dist.population_sd();
                let v = match f.dist {
                    Marginal::Normal { mean, sd, min, max } => {
                        let mut v = mean + sd * rng.normal() + delta;
                        if let Some(lo) = min {
                            v = v.max(lo);
                        }
                        if let Some(hi) = max {
                            v = v.min(hi);
                        }
                        v
                    }
                    Marginal::Lognormal { median, sigma } => {
                        (median.ln() + sigma * rng.normal()).exp() + delta
                    }
                    Marginal::Bernoulli { p } => {
                        let p = (p + delta).clamp(0.0, 1.0);
                        if rng.bernoulli(p) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Marginal::Gcs { max } => {
                        let latent = loading * severity + unique * rng.normal();
                        (gcs_value(latent, max) + delta).round().clamp(1.0, max as f64)
                    }
                };
                x[[i, j]] = v;
            }
        }
        Ok(x)
    }

    /// Intercept such that the mean ground-truth probability over `etas`
    /// equals `prevalence`.
    pub fn solve_intercept(etas: &[f64], prevalence: f64) -> f64 {
        let mean_p = |b: f64| etas.iter().map(|e| sigmoid(b + e)).sum::<f64>() / etas.len() as f64;
        let (mut lo, mut hi) = (-60.0, 60.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_p(mid) < prevalence {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Generates a labelled cohort with MCAR missingness at `missing_rate`.
pub fn generate_synthetic_cohort(
    n: usize,
    prevalence: f64,
    shift: &ShiftSpec,
    missing_rate: f64,
    rng: &mut SeededRng,
) -> Result<Cohort> {
    generate_with_config(&SyntheticConfig::default(), n, prevalence, shift, missing_rate, rng)
}

/// The reference cohort described by the shipped config's `default_cohort`.
pub fn default_synthetic_cohort() -> Result<Cohort> {
    let config = SyntheticConfig::default();
    let d = config.default_cohort;
    generate_with_config(
        &config,
        d.n,
        d.prevalence,
        &ShiftSpec::none(),
        d.missing_rate,
        &mut SeededRng::new(d.seed),
    )
}

pub fn generate_with_config(
    config: &SyntheticConfig,
    n: usize,
    prevalence: f64,
    shift: &ShiftSpec,
    missing_rate: f64,
    rng: &mut SeededRng,
) -> Result<Cohort> {
    let prevalence = shift.prevalence.unwrap_or(prevalence);
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::InvalidSpec(format!("prevalence {prevalence} outside (0,1)")));
    }
    if !(0.0..=0.5).contains(&missing_rate) {
        return Err(Error::InvalidSpec(format!("missing rate {missing_rate} outside [0,0.5]")));
    }
    let mut feature_rng = rng.split(0);
    let mut label_rng = rng.split(1);
    let mut mask_rng = rng.split(2);

    let x = config.draw_features(n, shift, &mut feature_rng)?;
    let etas: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| config.linear_predictor(r.as_slice().expect("row-major")))
        .collect();
    let intercept = SyntheticConfig::solve_intercept(&etas, prevalence);
    let y: Vec<u8> = etas
        .iter()
        .map(|e| u8::from(label_rng.bernoulli(sigmoid(intercept + e))))
        .collect();

    let d = config.features.len();
    let mut missing = Array2::from_elem((n, d), false);
    let mut x = x;
    if missing_rate > 0.0 {
        for i in 0..n {
            for (j, f) in config.features.iter().enumerate() {
                if !f.always_observed && mask_rng.bernoulli(missing_rate) {
                    missing[[i, j]] = true;
                    x[[i, j]] = 0.0;
                }
            }
        }
    }
    // keep the parent stream moving so successive calls differ
    rng.uniform();
    Cohort::with_mask(config.feature_names(), x, missing, y)
}
