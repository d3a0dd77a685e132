//! Dataset-shift statistics: two-sample KS per continuous feature with a
//! Bonferroni family, chi-square tests for binary features and the label
//! prevalence, and a KS test on the confidence distribution.

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::model::FittedModel;
use crate::numeric::stats::{chi2_sf, kolmogorov_sf, linspace, silverman_bandwidth};
use crate::numeric::{gaussian_kde, SeededRng};

pub const DRIFT_FORMAT: &str = "vdpt.drift_report.v1";
pub const FAMILY_ALPHA: f64 = 0.01;
pub const MIN_KS_SAMPLES: usize = 5;
pub const MIN_CHI2_TOTAL: u64 = 5;
const KDE_POINTS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value at
/// effective size `nm/(n+m)`.
pub fn ks_2sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    for s in [a, b] {
        if s.len() < MIN_KS_SAMPLES {
            return Err(Error::TooFewSamples {
                needed: MIN_KS_SAMPLES,
                got: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ks sample".into()));
        }
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    // evaluate both ECDFs just after each pooled value, consuming ties together
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let d = d.max((i as f64 / n - j as f64 / m).abs());
    let ne = n * m / (n + m);
    Ok(KsResult {
        d,
        p_value: kolmogorov_sf(ne.sqrt() * d),
    })
}

/// One-sample Kolmogorov-Smirnov test of `sample` against a continuous
/// `cdf`, asymptotic p-value.
pub fn ks_1sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsResult> {
    if sample.len() < MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_KS_SAMPLES,
            got: sample.len(),
        });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ks sample".into()));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        d,
        p_value: kolmogorov_sf(n.sqrt() * d),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

/// One-way chi-square of observed counts against expected proportions.
pub fn chi2_goodness_of_fit(observed: &[u64], expected: &[f64]) -> Result<Chi2Result> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "{} counts for {} proportions",
            observed.len(),
            expected.len()
        )));
    }
    let total: u64 = observed.iter().sum();
    if total < MIN_CHI2_TOTAL {
        return Err(Error::TooFewSamples {
            needed: MIN_CHI2_TOTAL as usize,
            got: total as usize,
        });
    }
    if expected.iter().any(|q| !(0.0..=1.0).contains(q)) || (expected.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec("expected proportions must lie in [0,1] and sum to 1".into()));
    }
    let mut stat = 0.0;
    for (k, (&o, &q)) in observed.iter().zip(expected).enumerate() {
        let e = q * total as f64;
        if e == 0.0 {
            return Err(Error::ZeroExpected(k));
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    let dof = observed.len() - 1;
    Ok(Chi2Result {
        statistic: stat,
        p_value: chi2_sf(stat, dof as f64),
        dof,
    })
}

/// Label prevalence test: `observed = (negatives, positives)` against
/// reference proportions `(q0, q1)`.
pub fn chi2_label_test(observed: (u64, u64), expected: (f64, f64)) -> Result<Chi2Result> {
    chi2_goodness_of_fit(&[observed.0, observed.1], &[expected.0, expected.1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureTest {
    Ks,
    Chi2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub reference: Vec<f64>,
    pub current: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDrift {
    pub feature: String,
    pub test: FeatureTest,
    /// KS `D` or the chi-square statistic; absent when the test could not run.
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub flagged: bool,
    pub n_reference: usize,
    pub n_current: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kde: Option<KdeCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDrift {
    pub statistic: f64,
    pub p_value: f64,
    /// `(negative, positive)`.
    pub observed: (f64, f64),
    pub expected: (f64, f64),
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceDrift {
    pub d: f64,
    pub p_value: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub format: String,
    pub n_reference: usize,
    pub n_current: usize,
    pub alpha: f64,
    /// Number of feature tests in the Bonferroni family.
    pub tests: usize,
    /// Per-test threshold `α/m`.
    pub threshold: f64,
    pub features: Vec<FeatureDrift>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelDrift>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<ConfidenceDrift>,
}

impl DriftReport {
    pub fn flagged_features(&self) -> Vec<&str> {
        self.features.iter().filter(|f| f.flagged).map(|f| f.feature.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftOptions {
    pub alpha: f64,
    /// Run the label prevalence test; off when current outcomes are unknown.
    pub labels: bool,
    pub kde: bool,
}

impl Default for DriftOptions {
    fn default() -> Self {
        Self {
            alpha: FAMILY_ALPHA,
            labels: true,
            kde: true,
        }
    }
}

fn is_binary(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn kde_curve(reference: &[f64], current: &[f64]) -> Option<KdeCurve> {
    let h = silverman_bandwidth(reference).ok()?.max(silverman_bandwidth(current).ok()?);
    let lo = reference.iter().chain(current).copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = reference.iter().chain(current).copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let grid = linspace(lo, hi, KDE_POINTS);
    Some(KdeCurve {
        reference: gaussian_kde(reference, &grid).ok()?,
        current: gaussian_kde(current, &grid).ok()?,
        grid,
    })
}

fn feature_test(name: &str, reference: &[f64], current: &[f64]) -> FeatureDrift {
    let binary = is_binary(reference) && is_binary(current);
    let mut out = FeatureDrift {
        feature: name.to_string(),
        test: if binary { FeatureTest::Chi2 } else { FeatureTest::Ks },
        statistic: None,
        p_value: None,
        flagged: false,
        n_reference: reference.len(),
        n_current: current.len(),
        kde: None,
        note: None,
    };
    let result = if binary {
        let ones = |v: &[f64]| v.iter().filter(|&&x| x == 1.0).count() as u64;
        let q1 = ones(reference) as f64 / reference.len().max(1) as f64;
        let k1 = ones(current);
        chi2_goodness_of_fit(&[current.len() as u64 - k1, k1], &[1.0 - q1, q1]).map(|r| (r.statistic, r.p_value))
    } else {
        ks_2sample(reference, current).map(|r| (r.d, r.p_value))
    };
    match result {
        Ok((s, p)) => {
            out.statistic = Some(s);
            out.p_value = Some(p);
        }
        Err(e) => out.note = Some(e.to_string()),
    }
    out
}

/// Compares `current` against `reference` feature by feature. With a model
/// carrying a variance CDF, also compares the confidence distributions.
pub fn drift_report(
    reference: &Cohort,
    current: &Cohort,
    model: Option<&FittedModel>,
    options: &DriftOptions,
) -> Result<DriftReport> {
    if reference.feature_names != current.feature_names {
        return Err(Error::SchemaMismatch(format!(
            "reference features {:?}, current {:?}",
            reference.feature_names, current.feature_names
        )));
    }
    for c in [reference, current] {
        if c.n_rows() < MIN_KS_SAMPLES {
            return Err(Error::TooFewSamples {
                needed: MIN_KS_SAMPLES,
                got: c.n_rows(),
            });
        }
    }
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::InvalidSpec("alpha must lie in (0,1)".into()));
    }
    let mut features: Vec<FeatureDrift> = (0..reference.n_features())
        .map(|j| feature_test(&reference.feature_names[j], &reference.observed(j), &current.observed(j)))
        .collect();
    let tests = features.len();
    let threshold = options.alpha / tests as f64;
    for (j, f) in features.iter_mut().enumerate() {
        f.flagged = f.p_value.is_some_and(|p| p < threshold);
        if f.flagged && options.kde && f.test == FeatureTest::Ks {
            f.kde = kde_curve(&reference.observed(j), &current.observed(j));
        }
    }
    let label = if options.labels {
        let q1 = reference.prevalence();
        let pos = current.positives() as u64;
        let n = current.n_rows() as u64;
        let r = chi2_label_test((n - pos, pos), (1.0 - q1, q1))?;
        Some(LabelDrift {
            statistic: r.statistic,
            p_value: r.p_value,
            observed: ((n - pos) as f64 / n as f64, pos as f64 / n as f64),
            expected: (1.0 - q1, q1),
            flagged: r.p_value < options.alpha,
        })
    } else {
        None
    };
    let confidence = match model {
        Some(m) => {
            let conf = |c: &Cohort| -> Result<Option<Vec<f64>>> {
                Ok(m.predict(c)?.iter().map(|p| p.confidence).collect())
            };
            match (conf(reference)?, conf(current)?) {
                (Some(a), Some(b)) => {
                    let r = ks_2sample(&a, &b)?;
                    Some(ConfidenceDrift {
                        d: r.d,
                        p_value: r.p_value,
                        flagged: r.p_value < options.alpha,
                    })
                }
                _ => None,
            }
        }
        None => None,
    };
    Ok(DriftReport {
        format: DRIFT_FORMAT.into(),
        n_reference: reference.n_rows(),
        n_current: current.n_rows(),
        alpha: options.alpha,
        tests,
        threshold,
        features,
        label,
        confidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapNull {
    pub repetitions: usize,
    /// Repetitions in which any feature was flagged.
    pub family_false_positives: usize,
    pub rate: f64,
}

/// Draws `repetitions` bootstrap resamples of size `n` from `reference` and
/// runs the feature battery of each against `reference`.
pub fn bootstrap_null(reference: &Cohort, n: usize, repetitions: usize, alpha: f64, rng: &mut SeededRng) -> Result<BootstrapNull> {
    let options = DriftOptions {
        alpha,
        labels: false,
        kde: false,
    };
    let mut hits = 0;
    for _ in 0..repetitions {
        let rows: Vec<usize> = (0..n).map(|_| rng.index(reference.n_rows())).collect();
        let report = drift_report(reference, &reference.select_rows(&rows), None, &options)?;
        if report.features.iter().any(|f| f.flagged) {
            hits += 1;
        }
    }
    Ok(BootstrapNull {
        repetitions,
        family_false_positives: hits,
        rate: hits as f64 / repetitions.max(1) as f64,
    })
}
