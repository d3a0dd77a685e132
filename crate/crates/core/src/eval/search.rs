//! Seeded random hyperparameter search ranked by cross-validated LR+.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvConfig};
use crate::data::{Cohort, Strategy};
use crate::error::{Error, Result};
use crate::mlp::TrainConfig;
use crate::model::{ModelConfig, ModelKind};
use crate::numeric::SeededRng;
use crate::vdp::VdpTrainConfig;

pub const LEADERBOARD_FORMAT: &str = "vdpt.leaderboard.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Inclusive width range for each of the three hidden layers.
    pub widths: [(usize, usize); 3],
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    /// Sampled log-uniformly.
    pub weight_decay: (f64, f64),
    pub momentum: (f64, f64),
    pub epochs: (usize, usize),
    pub batch_sizes: Vec<usize>,
    pub imbalance: Vec<Strategy>,
}

impl SearchSpace {
    /// Ranges bracketing the shipped profile of `kind`.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Mlp => Self {
                widths: [(16, 256); 3],
                learning_rate: (1e-3, 1e-1),
                weight_decay: (1e-4, 1e-1),
                momentum: (0.0, 0.95),
                epochs: (10, 150),
                batch_sizes: vec![0, 256, 1000],
                imbalance: vec![Strategy::PosWeight, Strategy::Undersample, Strategy::Smote { k: 5 }],
            },
            ModelKind::Vdp => Self {
                widths: [(8, 128); 3],
                learning_rate: (2e-4, 2e-2),
                weight_decay: (1e-4, 1e-1),
                momentum: (0.0, 0.95),
                epochs: (5, 40),
                batch_sizes: vec![100, 250, 1000],
                imbalance: vec![Strategy::Undersample, Strategy::Smote { k: 5 }, Strategy::PosWeight],
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Error::InvalidSpec(format!("empty or invalid {what} range"))) };
        for (lo, hi) in self.widths {
            bad(lo >= 1 && lo <= hi, "width")?;
        }
        bad(self.learning_rate.0 > 0.0 && self.learning_rate.0 <= self.learning_rate.1, "learning rate")?;
        bad(self.weight_decay.0 > 0.0 && self.weight_decay.0 <= self.weight_decay.1, "weight decay")?;
        bad(self.momentum.0 >= 0.0 && self.momentum.0 <= self.momentum.1 && self.momentum.1 < 1.0, "momentum")?;
        bad(self.epochs.0 >= 1 && self.epochs.0 <= self.epochs.1, "epoch")?;
        bad(!self.batch_sizes.is_empty(), "batch size")?;
        bad(!self.imbalance.is_empty(), "imbalance strategy")
    }

    fn sample(&self, kind: ModelKind, rng: &mut SeededRng, seed: u64) -> ModelConfig {
        let log_uniform = |rng: &mut SeededRng, (lo, hi): (f64, f64)| (rng.uniform_range(lo.ln(), hi.ln().max(lo.ln()))).exp().clamp(lo, hi);
        let int = |rng: &mut SeededRng, (lo, hi): (usize, usize)| lo + rng.index(hi - lo + 1);
        let hidden: Vec<usize> = self.widths.iter().map(|&r| int(rng, r)).collect();
        let learning_rate = log_uniform(rng, self.learning_rate);
        let weight_decay = log_uniform(rng, self.weight_decay);
        let momentum = if self.momentum.0 == self.momentum.1 {
            self.momentum.0
        } else {
            rng.uniform_range(self.momentum.0, self.momentum.1)
        };
        let epochs = int(rng, self.epochs);
        let batch_size = self.batch_sizes[rng.index(self.batch_sizes.len())];
        let imbalance = self.imbalance[rng.index(self.imbalance.len())];
        match kind {
            ModelKind::Mlp => ModelConfig::Mlp {
                train: TrainConfig {
                    hidden,
                    epochs,
                    batch_size,
                    learning_rate,
                    weight_decay,
                    momentum,
                    pos_weight: 1.0,
                    seed,
                },
                imbalance: Some(imbalance),
            },
            ModelKind::Vdp => ModelConfig::Vdp {
                train: VdpTrainConfig {
                    hidden,
                    epochs,
                    batch_size,
                    learning_rate,
                    weight_decay,
                    momentum,
                    seed,
                    imbalance,
                    ..VdpTrainConfig::default_profile()
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Ok {
        #[serde(with = "super::metrics::lr_serde")]
        mean_lr_plus: f64,
        mean_sensitivity: f64,
        mean_roc_auc: Option<f64>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    /// Sampling order of the candidate.
    pub candidate: usize,
    pub config: ModelConfig,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub format: String,
    pub model: ModelKind,
    pub seed: u64,
    pub entries: Vec<LeaderboardEntry>,
}

impl Leaderboard {
    /// Best successful configuration, if any.
    pub fn best(&self) -> Option<&ModelConfig> {
        self.entries
            .iter()
            .find(|e| matches!(e.outcome, Outcome::Ok { .. }))
            .map(|e| &e.config)
    }
}

/// Ranking tier: finite or infinite LR+ with adequate sensitivity first,
/// infinite LR+ with sensitivity below 0.5 next, failures last.
fn tier(o: &Outcome) -> u8 {
    match o {
        Outcome::Ok {
            mean_lr_plus,
            mean_sensitivity,
            ..
        } => {
            if mean_lr_plus.is_infinite() && *mean_sensitivity < 0.5 {
                1
            } else {
                0
            }
        }
        Outcome::Failed { .. } => 2,
    }
}

fn lr_of(o: &Outcome) -> f64 {
    match o {
        Outcome::Ok { mean_lr_plus, .. } => *mean_lr_plus,
        Outcome::Failed { .. } => f64::NEG_INFINITY,
    }
}

/// Orders entries best first: tier, then LR+ descending, then sampling order.
pub fn rank_entries(entries: &mut [LeaderboardEntry]) {
    entries.sort_by(|a, b| {
        tier(&a.outcome)
            .cmp(&tier(&b.outcome))
            .then_with(|| lr_of(&b.outcome).partial_cmp(&lr_of(&a.outcome)).unwrap_or(Ordering::Equal))
            .then_with(|| a.candidate.cmp(&b.candidate))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
}

/// Samples `budget` configurations from `space`, cross-validates each and
/// ranks them by mean LR+. Training failures are recorded, not raised.
pub fn random_search(
    kind: ModelKind,
    cohort: &Cohort,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    cv: &CvConfig,
) -> Result<Leaderboard> {
    if budget == 0 {
        return Err(Error::InvalidSpec("budget must be at least 1".into()));
    }
    space.validate()?;
    let master = SeededRng::new(seed);
    let mut sampler = master.split(0);
    let mut entries = Vec::with_capacity(budget);
    for candidate in 0..budget {
        let config = space.sample(kind, &mut sampler, master.split(candidate as u64 + 1).seed());
        let outcome = match cross_validate(&config, cohort, cv) {
            Ok(report) => {
                let lr: Vec<f64> = report.fold_values("lr_plus");
                let mean_lr_plus = if lr.iter().any(|v| v.is_infinite()) {
                    f64::INFINITY
                } else {
                    lr.iter().sum::<f64>() / lr.len() as f64
                };
                Outcome::Ok {
                    mean_lr_plus,
                    mean_sensitivity: report.mean.get("sensitivity").copied().unwrap_or(0.0),
                    mean_roc_auc: report.mean.get("roc_auc").copied(),
                }
            }
            Err(e) => Outcome::Failed { error: e.to_string() },
        };
        entries.push(LeaderboardEntry {
            rank: 0,
            candidate,
            config,
            outcome,
        });
    }
    rank_entries(&mut entries);
    Ok(Leaderboard {
        format: LEADERBOARD_FORMAT.into(),
        model: kind,
        seed,
        entries,
    })
}
