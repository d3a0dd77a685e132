//! Stratified k-fold cross-validation and paired comparison of fold metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{metrics, MetricSet};
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::model::{FittedModel, ModelConfig, ModelKind};
use crate::numeric::stats::{mean, std_dev, student_t_two_sided};
use crate::numeric::SeededRng;

pub const CV_FORMAT: &str = "vdpt.cv_report.v1";

/// Splits row indices into `k` folds, dealing each class round-robin after a
/// seeded shuffle so every fold's positive count is within one of the others.
pub fn stratified_kfold(cohort: &Cohort, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidSpec("k must be at least 2".into()));
    }
    let (neg, pos) = cohort.class_indices();
    for (class, rows) in [(0u8, &neg), (1u8, &pos)] {
        if rows.len() < k {
            return Err(Error::TooFewPerClass {
                class,
                count: rows.len(),
                k,
            });
        }
    }
    let mut rng = SeededRng::new(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for rows in [pos, neg] {
        let mut rows = rows.clone();
        rng.shuffle(&mut rows);
        for i in rows {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub format: String,
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    /// Mean over folds per metric (folds where the metric is undefined are
    /// skipped).
    pub mean: BTreeMap<String, f64>,
    /// Standard error of the mean, `sd / √k`.
    pub std_error: BTreeMap<String, f64>,
}

impl CvReport {
    /// Per-fold values of one metric, in fold order.
    pub fn fold_values(&self, metric: &str) -> Vec<f64> {
        self.folds.iter().filter_map(|f| f.metrics.get(metric)).collect()
    }
}

/// Cross-validates `config`. Imputation, standardization and rebalancing are
/// fitted on each training fold only. Fold `i` trains with the seed of stream
/// `i` of the configured seed.
pub fn cross_validate(config: &ModelConfig, cohort: &Cohort, cv: &CvConfig) -> Result<CvReport> {
    let folds = stratified_kfold(cohort, cv.k, cv.seed)?;
    let master = SeededRng::new(config.seed());
    let mut results = Vec::with_capacity(cv.k);
    for (i, test_rows) in folds.iter().enumerate() {
        let mut in_test = vec![false; cohort.n_rows()];
        for &r in test_rows {
            in_test[r] = true;
        }
        let train_rows: Vec<usize> = (0..cohort.n_rows()).filter(|&r| !in_test[r]).collect();
        let train = cohort.select_rows(&train_rows);
        let test = cohort.select_rows(test_rows);
        let model = FittedModel::fit(&train, &config.with_seed(master.split(i as u64).seed()))?;
        let scores = model.scores(&test)?;
        results.push(FoldResult {
            fold: i,
            n_train: train_rows.len(),
            n_test: test_rows.len(),
            metrics: metrics(&scores, &test.y, cv.threshold)?,
        });
    }
    let mut mean_map = BTreeMap::new();
    let mut se_map = BTreeMap::new();
    for name in MetricSet::COLUMNS {
        let values: Vec<f64> = results.iter().filter_map(|f| f.metrics.get(name)).collect();
        if values.is_empty() {
            continue;
        }
        mean_map.insert(name.to_string(), mean(&values));
        let se = if values.len() > 1 && values.iter().all(|v| v.is_finite()) {
            std_dev(&values, 1) / (values.len() as f64).sqrt()
        } else {
            f64::NAN
        };
        se_map.insert(name.to_string(), se);
    }
    Ok(CvReport {
        format: CV_FORMAT.into(),
        model: config.kind(),
        k: cv.k,
        seed: cv.seed,
        folds: results,
        mean: mean_map,
        std_error: se_map,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub mean_difference: f64,
}

/// Two-sided paired t-test on per-fold values `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} paired values", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: a.len() });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    let sd = std_dev(&d, 1);
    let df = (d.len() - 1) as f64;
    if sd == 0.0 {
        let (t, p) = if m == 0.0 { (0.0, 1.0) } else { (m.signum() * f64::INFINITY, 0.0) };
        return Ok(PairedTTest {
            t,
            df,
            p_value: p,
            mean_difference: m,
        });
    }
    let t = m / (sd / (d.len() as f64).sqrt());
    Ok(PairedTTest {
        t,
        df,
        p_value: student_t_two_sided(t, df),
        mean_difference: m,
    })
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else if v.is_nan() {
        "-".into()
    } else {
        format!("{v:.2}")
    }
}

const TABLE_HEADER: [&str; 7] = [
    "Precision",
    "Sensitivity",
    "Specificity",
    "ROC AUC",
    "PRC AUC",
    "Balanced Accuracy",
    "LR+",
];
const TABLE_METRICS: [&str; 7] = [
    "precision",
    "sensitivity",
    "specificity",
    "roc_auc",
    "prc_auc",
    "balanced_accuracy",
    "lr_plus",
];

fn render(rows: &[(String, Vec<String>)]) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(TABLE_HEADER.iter().map(|s| s.to_string()));
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for (name, cells) in rows {
        widths[0] = widths[0].max(name.len());
        for (i, c) in cells.iter().enumerate() {
            widths[i + 1] = widths[i + 1].max(c.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.iter().map(String::as_str).collect());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-"));
    out.push('\n');
    for (name, cells) in rows {
        let mut all = vec![name.as_str()];
        all.extend(cells.iter().map(String::as_str));
        out.push_str(&line(all));
        out.push('\n');
    }
    out
}

/// One row per labelled metric set, columns as in the per-cohort results
/// table.
pub fn render_metrics_table(rows: &[(String, MetricSet)]) -> String {
    let rows: Vec<(String, Vec<String>)> = rows
        .iter()
        .map(|(name, m)| {
            let cells = TABLE_METRICS
                .iter()
                .map(|k| m.get(k).map_or("-".into(), fmt_value))
                .collect();
            (name.clone(), cells)
        })
        .collect();
    render(&rows)
}

/// Mean ± standard error per metric for each report.
pub fn render_cv_table(reports: &[CvReport]) -> String {
    let rows: Vec<(String, Vec<String>)> = reports
        .iter()
        .map(|r| {
            let cells = TABLE_METRICS
                .iter()
                .map(|k| match r.mean.get(*k) {
                    Some(m) => format!("{}±({})", fmt_value(*m), fmt_value(r.std_error.get(*k).copied().unwrap_or(f64::NAN))),
                    None => "-".into(),
                })
                .collect();
            (r.model.to_string(), cells)
        })
        .collect();
    render(&rows)
}
