//! Binary classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::stats::average_ranks;

/// Positive likelihood ratio as serialized: finite values are numbers, the
/// `spec = 1, sens > 0` case is the string `"inf"`.
pub(crate) mod lr_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Num(*v).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(_) => Ok(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub threshold: f64,
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// `None` when only one class is present.
    pub roc_auc: Option<f64>,
    pub prc_auc: Option<f64>,
    pub balanced_accuracy: f64,
    #[serde(with = "lr_serde")]
    pub lr_plus: f64,
    pub accuracy: f64,
}

impl MetricSet {
    /// Metric names in reporting order.
    pub const COLUMNS: [&'static str; 8] = [
        "precision",
        "sensitivity",
        "specificity",
        "roc_auc",
        "prc_auc",
        "balanced_accuracy",
        "lr_plus",
        "accuracy",
    ];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "precision" => Some(self.precision),
            "sensitivity" => Some(self.sensitivity),
            "specificity" => Some(self.specificity),
            "roc_auc" => self.roc_auc,
            "prc_auc" => self.prc_auc,
            "balanced_accuracy" => Some(self.balanced_accuracy),
            "lr_plus" => Some(self.lr_plus),
            "accuracy" => Some(self.accuracy),
            _ => None,
        }
    }
}

/// `sens / (1 − spec)`; infinite when `spec = 1` and `sens > 0`, zero when both
/// rates are degenerate at zero sensitivity.
pub fn lr_plus(sensitivity: f64, specificity: f64) -> f64 {
    let fpr = 1.0 - specificity;
    if fpr <= 0.0 {
        if sensitivity > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        sensitivity / fpr
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score".into()));
    }
    Ok(())
}

/// ROC AUC as the Mann–Whitney statistic: the fraction of (positive,
/// negative) pairs ranked correctly, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Area under the precision–recall curve with step interpolation
/// (average precision): `Σ (R_k − R_{k−1})·P_k` over distinct thresholds.
pub fn prc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Threshold metrics plus both AUCs. AUCs are `None` for single-class input.
pub fn metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricSet> {
    check_inputs(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let sensitivity = ratio(tp, tp + fn_);
    let specificity = ratio(tn, tn + fp);
    Ok(MetricSet {
        threshold,
        precision: ratio(tp, tp + fp),
        sensitivity,
        specificity,
        roc_auc: roc_auc(scores, labels).ok(),
        prc_auc: prc_auc(scores, labels).ok(),
        balanced_accuracy: (sensitivity + specificity) / 2.0,
        lr_plus: lr_plus(sensitivity, specificity),
        accuracy: ratio(tp + tn, labels.len()),
    })
}
