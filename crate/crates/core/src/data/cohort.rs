use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature z-score statistics fitted on a training split.
///
/// Constant features carry a `std` of exactly 1.0 so applying the transform
/// maps them to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Labelled feature matrix with a missingness mask.
///
/// Missing cells hold `0.0` in `x` and `true` in `missing`; `y` is 1 for
/// mortality (the positive class).
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub feature_names: Vec<String>,
    pub x: Array2<f64>,
    pub missing: Array2<bool>,
    pub y: Vec<u8>,
    pub standardization: Option<Standardization>,
}

impl Cohort {
    pub fn new(feature_names: Vec<String>, x: Array2<f64>, y: Vec<u8>) -> Result<Self> {
        let missing = Array2::from_elem(x.raw_dim(), false);
        Self::with_mask(feature_names, x, missing, y)
    }

    pub fn with_mask(
        feature_names: Vec<String>,
        x: Array2<f64>,
        missing: Array2<bool>,
        y: Vec<u8>,
    ) -> Result<Self> {
        if x.ncols() != feature_names.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} names for {} columns",
                feature_names.len(),
                x.ncols()
            )));
        }
        if missing.raw_dim() != x.raw_dim() {
            return Err(Error::ShapeMismatch("mask and matrix differ".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if let Some(row) = y.iter().position(|&v| v > 1) {
            return Err(Error::InvalidLabel {
                row,
                value: y[row].to_string(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cohort feature matrix".into()));
        }
        Ok(Self {
            feature_names,
            x,
            missing,
            y,
            standardization: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn prevalence(&self) -> f64 {
        self.positives() as f64 / self.n_rows() as f64
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Observed (non-missing) values of column `j`.
    pub fn observed(&self, j: usize) -> Vec<f64> {
        self.x
            .column(j)
            .iter()
            .zip(self.missing.column(j))
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| v)
            .collect()
    }

    pub fn missing_rate(&self, j: usize) -> f64 {
        let n = self.n_rows();
        if n == 0 {
            return 0.0;
        }
        self.missing.column(j).iter().filter(|&&m| m).count() as f64 / n as f64
    }

    pub fn labels_f64(&self) -> Array1<f64> {
        self.y.iter().map(|&v| v as f64).collect()
    }

    pub fn row(&self, i: usize) -> Array1<f64> {
        self.x.row(i).to_owned()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Cohort {
        Cohort {
            feature_names: self.feature_names.clone(),
            x: self.x.select(Axis(0), rows),
            missing: self.missing.select(Axis(0), rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            standardization: self.standardization.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Cohort {
        let standardization = self.standardization.as_ref().map(|s| Standardization {
            feature_names: cols.iter().map(|&c| s.feature_names[c].clone()).collect(),
            mean: cols.iter().map(|&c| s.mean[c]).collect(),
            std: cols.iter().map(|&c| s.std[c]).collect(),
        });
        Cohort {
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            x: self.x.select(Axis(1), cols),
            missing: self.missing.select(Axis(1), cols),
            y: self.y.clone(),
            standardization,
        }
    }

    /// Columns matching `names`, in that order.
    pub fn select_features(&self, names: &[String]) -> Result<Cohort> {
        let cols = names
            .iter()
            .map(|n| {
                self.feature_index(n)
                    .ok_or_else(|| Error::SchemaMismatch(format!("unknown feature `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&cols))
    }

    /// Row indices of each class, ascending.
    pub fn class_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let mut neg = Vec::new();
        let mut pos = Vec::new();
        for (i, &v) in self.y.iter().enumerate() {
            if v == 1 {
                pos.push(i);
            } else {
                neg.push(i);
            }
        }
        (neg, pos)
    }

    /// Stacks two cohorts with identical schemas.
    pub fn concat(&self, other: &Cohort) -> Result<Cohort> {
        if self.feature_names != other.feature_names {
            return Err(Error::SchemaMismatch("feature names differ".into()));
        }
        let x = ndarray::concatenate(Axis(0), &[self.x.view(), other.x.view()])
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let missing = ndarray::concatenate(Axis(0), &[self.missing.view(), other.missing.view()])
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Ok(Cohort {
            feature_names: self.feature_names.clone(),
            x,
            missing,
            y,
            standardization: self.standardization.clone(),
        })
    }
}
