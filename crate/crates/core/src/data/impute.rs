//! Chained-equation imputation (single imputation, OLS regressors).
//!
//! Missing cells start at the observed column mean; each round regresses
//! every incomplete feature on all other columns and refreshes its missing
//! cells. Features are visited in descending missingness (ties by column
//! index). The fitted regressors can be replayed on a held-out split.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use crate::error::{Error, Result};
use crate::numeric::linalg::Cholesky;
use crate::numeric::stats;

pub const DEFAULT_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainedImputer {
    pub feature_names: Vec<String>,
    pub fill_means: Vec<f64>,
    /// Visit order of features.
    pub order: Vec<usize>,
    /// Per feature: intercept followed by one coefficient per column (the
    /// feature's own slot is zero). `None` for features that were complete.
    pub regressors: Vec<Option<Vec<f64>>>,
    pub rounds: usize,
}

/// Ordinary least squares with intercept via the normal equations.
fn ols(design: &Array2<f64>, target: &Array1<f64>) -> Vec<f64> {
    let n = design.nrows();
    let p = design.ncols() + 1;
    let mut xa = Array2::<f64>::ones((n, p));
    xa.slice_mut(ndarray::s![.., 1..]).assign(design);
    let xtx = xa.t().dot(&xa);
    let xty = xa.t().dot(target);
    let scale = (0..p).map(|i| xtx[[i, i]]).fold(0.0f64, f64::max).max(1.0);
    let mut jitter = 0.0;
    loop {
        let mut a = xtx.clone();
        for i in 0..p {
            a[[i, i]] += jitter;
        }
        if let Ok(ch) = Cholesky::factor(a.view()) {
            return ch.solve_vec(xty.as_slice().expect("contiguous"));
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
    }
}

fn predict(coef: &[f64], x: &Array2<f64>, i: usize, skip: usize) -> f64 {
    let mut v = coef[0];
    for j in 0..x.ncols() {
        if j != skip {
            v += coef[j + 1] * x[[i, j]];
        }
    }
    v
}

impl ChainedImputer {
    /// Fits on `cohort` and returns the imputer with the completed cohort.
    pub fn fit(cohort: &Cohort, rounds: usize) -> Result<(Self, Cohort)> {
        let d = cohort.n_features();
        let mut fill_means = Vec::with_capacity(d);
        for j in 0..d {
            let obs = cohort.observed(j);
            if obs.is_empty() {
                return Err(Error::AllMissingFeature(cohort.feature_names[j].clone()));
            }
            fill_means.push(stats::mean(&obs));
        }
        let rates: Vec<f64> = (0..d).map(|j| cohort.missing_rate(j)).collect();
        let mut order: Vec<usize> = (0..d).filter(|&j| rates[j] > 0.0).collect();
        order.sort_by(|&a, &b| rates[b].total_cmp(&rates[a]).then(a.cmp(&b)));

        let mut x = cohort.x.clone();
        for ((i, j), v) in x.indexed_iter_mut() {
            if cohort.missing[[i, j]] {
                *v = fill_means[j];
            }
        }
        let mut regressors: Vec<Option<Vec<f64>>> = vec![None; d];
        for _ in 0..rounds {
            for &j in &order {
                let rows: Vec<usize> = (0..cohort.n_rows())
                    .filter(|&i| !cohort.missing[[i, j]])
                    .collect();
                let others: Vec<usize> = (0..d).filter(|&k| k != j).collect();
                let design = x
                    .select(ndarray::Axis(0), &rows)
                    .select(ndarray::Axis(1), &others);
                let target: Array1<f64> = rows.iter().map(|&i| x[[i, j]]).collect();
                let beta = ols(&design, &target);
                let mut coef = vec![0.0; d + 1];
                coef[0] = beta[0];
                for (b, &k) in beta[1..].iter().zip(&others) {
                    coef[k + 1] = *b;
                }
                for i in 0..cohort.n_rows() {
                    if cohort.missing[[i, j]] {
                        x[[i, j]] = predict(&coef, &x, i, j);
                    }
                }
                regressors[j] = Some(coef);
            }
        }
        let imputer = Self {
            feature_names: cohort.feature_names.clone(),
            fill_means,
            order,
            regressors,
            rounds,
        };
        let mut out = cohort.clone();
        out.x = x;
        out.missing.fill(false);
        Ok((imputer, out))
    }

    /// Completes another split with the fitted regressors.
    pub fn apply(&self, cohort: &Cohort) -> Result<Cohort> {
        if cohort.feature_names != self.feature_names {
            return Err(Error::SchemaMismatch("imputer fitted on different features".into()));
        }
        let mut x = cohort.x.clone();
        for ((i, j), v) in x.indexed_iter_mut() {
            if cohort.missing[[i, j]] {
                *v = self.fill_means[j];
            }
        }
        if cohort.has_missing() {
            for _ in 0..self.rounds {
                for j in 0..cohort.n_features() {
                    let Some(coef) = &self.regressors[j] else { continue };
                    for i in 0..cohort.n_rows() {
                        if cohort.missing[[i, j]] {
                            x[[i, j]] = predict(coef, &x, i, j);
                        }
                    }
                }
            }
        }
        let mut out = cohort.clone();
        out.x = x;
        out.missing.fill(false);
        Ok(out)
    }
}

/// Completes `cohort` in place of its missing cells.
pub fn impute_chained(cohort: &Cohort, rounds: usize) -> Result<Cohort> {
    ChainedImputer::fit(cohort, rounds).map(|(_, c)| c)
}
