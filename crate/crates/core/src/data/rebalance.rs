//! Class-imbalance handling: majority undersampling, SMOTE, or a positive
//! class loss weight.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Undersample,
    Smote { k: usize },
    PosWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rebalanced {
    Cohort(Cohort),
    PosWeight(f64),
}

/// `#negative / #positive`.
pub fn pos_weight(cohort: &Cohort) -> Result<f64> {
    let pos = cohort.positives();
    let neg = cohort.n_rows() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok(neg as f64 / pos as f64)
}

pub fn rebalance(cohort: &Cohort, strategy: Strategy, rng: &mut SeededRng) -> Result<Rebalanced> {
    match strategy {
        Strategy::PosWeight => pos_weight(cohort).map(Rebalanced::PosWeight),
        Strategy::Undersample => undersample(cohort, rng).map(Rebalanced::Cohort),
        Strategy::Smote { k } => smote(cohort, k, rng).map(Rebalanced::Cohort),
    }
}

/// Removes majority rows uniformly at random until classes are equal. Kept
/// rows stay in their original order.
pub fn undersample(cohort: &Cohort, rng: &mut SeededRng) -> Result<Cohort> {
    let (neg, pos) = cohort.class_indices();
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::SingleClass);
    }
    let (major, minor) = if neg.len() >= pos.len() { (neg, pos) } else { (pos, neg) };
    let keep = rng.sample_indices(major.len(), minor.len());
    let mut rows: Vec<usize> = keep.into_iter().map(|k| major[k]).chain(minor).collect();
    rows.sort_unstable();
    Ok(cohort.select_rows(&rows))
}

/// SMOTE: synthesizes minority rows `x + u·(x_nn − x)` with `u ~ U(0,1)` and
/// `x_nn` one of the `k` nearest minority neighbours (Euclidean distance on
/// z-scored features) until the classes balance. Synthetic rows are appended.
pub fn smote(cohort: &Cohort, k: usize, rng: &mut SeededRng) -> Result<Cohort> {
    if cohort.has_missing() {
        return Err(Error::InvalidSpec("smote requires an imputed cohort".into()));
    }
    let (neg, pos) = cohort.class_indices();
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::SingleClass);
    }
    let (major, minor, minor_label) = if neg.len() >= pos.len() {
        (neg, pos, 1u8)
    } else {
        (pos, neg, 0u8)
    };
    if minor.len() <= k {
        return Err(Error::TooFewMinority {
            count: minor.len(),
            k,
        });
    }
    let mean = cohort.x.mean_axis(Axis(0)).expect("non-empty");
    let std = cohort.x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    let z: Array2<f64> = (&cohort.x.select(Axis(0), &minor) - &mean) / &std;

    let neighbours: Vec<Vec<usize>> = (0..minor.len())
        .map(|a| {
            let mut d: Vec<(f64, usize)> = (0..minor.len())
                .filter(|&b| b != a)
                .map(|b| {
                    let diff = &z.row(a) - &z.row(b);
                    (diff.dot(&diff), b)
                })
                .collect();
            d.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            d.truncate(k);
            d.into_iter().map(|(_, b)| b).collect()
        })
        .collect();

    let needed = major.len() - minor.len();
    let d = cohort.n_features();
    let mut synth = Array2::<f64>::zeros((needed, d));
    for s in 0..needed {
        let a = rng.index(minor.len());
        let b = neighbours[a][rng.index(k)];
        let u = rng.uniform();
        let xa: Array1<f64> = cohort.x.row(minor[a]).to_owned();
        let xb = cohort.x.row(minor[b]);
        synth.row_mut(s).assign(&(&xa + &((&xb - &xa) * u)));
    }
    let extra = Cohort {
        feature_names: cohort.feature_names.clone(),
        missing: Array2::from_elem((needed, d), false),
        x: synth,
        y: vec![minor_label; needed],
        standardization: cohort.standardization.clone(),
    };
    cohort.concat(&extra)
}
