//! Correlation prune, missingness filter, then mutual-information ranking.

use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use crate::numeric::stats;

pub const MI_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub kept: String,
    pub dropped: String,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub format: String,
    pub dropped_by_correlation: Vec<DroppedPair>,
    /// (name, missing rate)
    pub dropped_by_missingness: Vec<(String, f64)>,
    /// (name, mutual information with the label in nats), descending.
    pub mi_ranking: Vec<(String, f64)>,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionConfig {
    pub corr_threshold: f64,
    pub missing_threshold: f64,
    pub top_k: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            corr_threshold: 0.9,
            missing_threshold: 0.5,
            top_k: 20,
        }
    }
}

/// Pearson correlation over rows where both columns are observed.
fn pairwise_complete_r(cohort: &Cohort, a: usize, b: usize) -> Option<f64> {
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for i in 0..cohort.n_rows() {
        if !cohort.missing[[i, a]] && !cohort.missing[[i, b]] {
            xa.push(cohort.x[[i, a]]);
            xb.push(cohort.x[[i, b]]);
        }
    }
    stats::pearson(&xa, &xb).ok()
}

/// Equal-frequency bin index per value; ties always share a bin.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let sorted = stats::sorted_copy(values);
    let cuts: Vec<f64> = (1..bins)
        .map(|k| stats::quantile_sorted(&sorted, k as f64 / bins as f64))
        .collect();
    values
        .iter()
        .map(|v| cuts.partition_point(|c| c < v))
        .collect()
}

fn entropy(counts: impl Iterator<Item = usize>, n: usize) -> f64 {
    let n = n as f64;
    -counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Plug-in mutual information (nats) between a binned feature and a binary label.
pub fn mutual_information(values: &[f64], labels: &[u8], bins: usize) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let b = equal_frequency_bins(values, bins);
    let nb = b.iter().max().map_or(1, |m| m + 1);
    let mut joint = vec![[0usize; 2]; nb];
    for (&bi, &y) in b.iter().zip(labels) {
        joint[bi][y as usize] += 1;
    }
    let hx = entropy(joint.iter().map(|c| c[0] + c[1]), n);
    let hy = entropy(
        [0, 1].into_iter().map(|k| joint.iter().map(|c| c[k]).sum()),
        n,
    );
    let hxy = entropy(joint.iter().flat_map(|c| [c[0], c[1]]), n);
    (hx + hy - hxy).max(0.0)
}

/// Runs the three-stage selection. Ties are resolved by feature name so the
/// selected set does not depend on column order.
pub fn select_features(cohort: &Cohort, config: &SelectionConfig) -> FeatureReport {
    let d = cohort.n_features();
    let names = &cohort.feature_names;
    let rates: Vec<f64> = (0..d).map(|j| cohort.missing_rate(j)).collect();

    let mut pairs = Vec::new();
    for a in 0..d {
        for b in (a + 1)..d {
            if let Some(r) = pairwise_complete_r(cohort, a, b) {
                if r.abs() > config.corr_threshold {
                    pairs.push((a, b, r));
                }
            }
        }
    }
    let key = |a: usize, b: usize| {
        if names[a] < names[b] {
            (names[a].clone(), names[b].clone())
        } else {
            (names[b].clone(), names[a].clone())
        }
    };
    pairs.sort_by(|p, q| {
        q.2.abs()
            .total_cmp(&p.2.abs())
            .then_with(|| key(p.0, p.1).cmp(&key(q.0, q.1)))
    });
    let mut dropped = vec![false; d];
    let mut dropped_by_correlation = Vec::new();
    for (a, b, r) in pairs {
        if dropped[a] || dropped[b] {
            continue;
        }
        // higher missingness loses, then the lexicographically larger name
        let loser = match rates[a].total_cmp(&rates[b]) {
            std::cmp::Ordering::Greater => a,
            std::cmp::Ordering::Less => b,
            std::cmp::Ordering::Equal => {
                if names[a] > names[b] {
                    a
                } else {
                    b
                }
            }
        };
        let winner = if loser == a { b } else { a };
        dropped[loser] = true;
        dropped_by_correlation.push(DroppedPair {
            kept: names[winner].clone(),
            dropped: names[loser].clone(),
            r,
        });
    }

    let mut dropped_by_missingness = Vec::new();
    let mut survivors = Vec::new();
    for j in 0..d {
        if dropped[j] {
            continue;
        }
        if rates[j] > config.missing_threshold {
            dropped_by_missingness.push((names[j].clone(), rates[j]));
        } else {
            survivors.push(j);
        }
    }

    let mut mi_ranking: Vec<(String, f64)> = survivors
        .iter()
        .map(|&j| {
            let (vals, labels): (Vec<f64>, Vec<u8>) = (0..cohort.n_rows())
                .filter(|&i| !cohort.missing[[i, j]])
                .map(|i| (cohort.x[[i, j]], cohort.y[i]))
                .unzip();
            (names[j].clone(), mutual_information(&vals, &labels, MI_BINS))
        })
        .collect();
    mi_ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let selected = mi_ranking
        .iter()
        .take(config.top_k)
        .map(|(n, _)| n.clone())
        .collect();
    FeatureReport {
        format: "vdpt.feature_report.v1".into(),
        dropped_by_correlation,
        dropped_by_missingness,
        mi_ranking,
        selected,
    }
}
