use super::cohort::{Cohort, Standardization};
use crate::error::{Error, Result};
use crate::numeric::stats;

impl Standardization {
    /// Fits population (ddof = 0) mean and standard deviation on observed cells.
    pub fn fit(cohort: &Cohort) -> Self {
        let mut mean = Vec::with_capacity(cohort.n_features());
        let mut std = Vec::with_capacity(cohort.n_features());
        for j in 0..cohort.n_features() {
            let col = cohort.observed(j);
            if col.is_empty() {
                mean.push(0.0);
                std.push(1.0);
                continue;
            }
            let m = stats::mean(&col);
            let s = stats::std_dev(&col, 0);
            mean.push(m);
            std.push(if s > 0.0 { s } else { 1.0 });
        }
        Self {
            feature_names: cohort.feature_names.clone(),
            mean,
            std,
        }
    }

    pub fn transform_value(&self, j: usize, v: f64) -> f64 {
        if self.std[j] == 1.0 && v == self.mean[j] {
            return 0.0;
        }
        (v - self.mean[j]) / self.std[j]
    }

    /// Standardizes one raw row.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| self.transform_value(j, v))
            .collect()
    }

    pub fn apply(&self, cohort: &Cohort) -> Result<Cohort> {
        if cohort.feature_names != self.feature_names {
            return Err(Error::SchemaMismatch(
                "standardization fitted on different features".into(),
            ));
        }
        let mut out = cohort.clone();
        for ((i, j), v) in out.x.indexed_iter_mut() {
            *v = if cohort.missing[[i, j]] {
                0.0
            } else {
                self.transform_value(j, *v)
            };
        }
        out.standardization = Some(self.clone());
        Ok(out)
    }
}

/// Fits z-score statistics on `train` and returns the standardized split with
/// the statistics attached.
pub fn standardize_fit(train: &Cohort) -> Result<Cohort> {
    Standardization::fit(train).apply(train)
}

/// Standardizes `other` with the statistics stored on `fitted`.
pub fn standardize_apply(fitted: &Cohort, other: &Cohort) -> Result<Cohort> {
    fitted
        .standardization
        .as_ref()
        .ok_or(Error::NotFitted)?
        .apply(other)
}
