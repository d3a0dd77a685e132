//! A trained network together with the preprocessing fitted on its training
//! split: chained imputation, then standardization.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{pos_weight, rebalance, ChainedImputer, Cohort, Rebalanced, Standardization, Strategy, DEFAULT_ROUNDS};
use crate::error::{Error, Result};
use crate::mlp::{self, MlpParams, TrainConfig};
use crate::numeric::SeededRng;
use crate::uncertainty::{fit_variance_cdf, VarianceCdf};
use crate::vdp::{train_vdp, VdpParams, VdpTrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Vdp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Vdp => "vdp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "vdp" => Ok(ModelKind::Vdp),
            other => Err(Error::InvalidSpec(format!("unknown model `{other}`; expected mlp or vdp"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelConfig {
    Mlp {
        train: TrainConfig,
        /// `None` trains with `train.pos_weight` as given.
        #[serde(default)]
        imbalance: Option<Strategy>,
    },
    Vdp {
        train: VdpTrainConfig,
    },
}

impl ModelConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Mlp => ModelConfig::Mlp {
                train: TrainConfig::default_profile(),
                imbalance: None,
            },
            ModelKind::Vdp => ModelConfig::Vdp {
                train: VdpTrainConfig::default_profile(),
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Mlp { .. } => ModelKind::Mlp,
            ModelConfig::Vdp { .. } => ModelKind::Vdp,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelConfig::Mlp { train, .. } => train.seed,
            ModelConfig::Vdp { train } => train.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        match &mut c {
            ModelConfig::Mlp { train, .. } => train.seed = seed,
            ModelConfig::Vdp { train } => train.seed = seed,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Network {
    Mlp {
        params: MlpParams,
        /// Positive-class weight used in training; part of the objective
        /// that influence functions differentiate.
        pos_weight: f64,
        weight_decay: f64,
    },
    Vdp {
        params: VdpParams,
        jitter: f64,
        weight_decay: f64,
        variance_cdf: VarianceCdf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    /// Predictive variance, VDP only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    /// `1 − F(σ²)` against the training-set variance distribution, VDP only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub feature_names: Vec<String>,
    pub imputer: ChainedImputer,
    pub standardization: Standardization,
    pub config: ModelConfig,
    pub network: Network,
    pub initial_loss: f64,
    pub loss_curve: Vec<f64>,
}

impl FittedModel {
    /// Fits imputation and standardization on `raw`, rebalances as
    /// configured, and trains.
    pub fn fit(raw: &Cohort, config: &ModelConfig) -> Result<Self> {
        let (imputer, imputed) = ChainedImputer::fit(raw, DEFAULT_ROUNDS)?;
        let standardization = Standardization::fit(&imputed);
        let train = standardization.apply(&imputed)?;
        let (network, initial_loss, loss_curve) = match config {
            ModelConfig::Mlp { train: tc, imbalance } => {
                let mut tc = tc.clone();
                let mut rng = SeededRng::new(tc.seed).split(2);
                let cohort = match imbalance {
                    None => train,
                    Some(Strategy::PosWeight) => {
                        tc.pos_weight = pos_weight(&train)?;
                        train
                    }
                    Some(s) => match rebalance(&train, *s, &mut rng)? {
                        Rebalanced::Cohort(c) => {
                            tc.pos_weight = 1.0;
                            c
                        }
                        Rebalanced::PosWeight(w) => {
                            tc.pos_weight = w;
                            train
                        }
                    },
                };
                let out = mlp::train(&cohort, &tc)?;
                (
                    Network::Mlp {
                        params: out.params,
                        pos_weight: tc.pos_weight,
                        weight_decay: tc.weight_decay,
                    },
                    out.initial_loss,
                    out.loss_curve,
                )
            }
            ModelConfig::Vdp { train: tc } => {
                let out = train_vdp(&train, tc)?;
                let variance_cdf = fit_variance_cdf(&out.params, &train)?;
                (
                    Network::Vdp {
                        params: out.params,
                        jitter: tc.jitter,
                        weight_decay: tc.weight_decay,
                        variance_cdf,
                    },
                    out.initial_loss,
                    out.loss_curve,
                )
            }
        };
        Ok(Self {
            feature_names: raw.feature_names.clone(),
            imputer,
            standardization,
            config: config.clone(),
            network,
            initial_loss,
            loss_curve,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.network {
            Network::Mlp { .. } => ModelKind::Mlp,
            Network::Vdp { .. } => ModelKind::Vdp,
        }
    }

    /// Imputes and standardizes a raw cohort with the fitted statistics.
    pub fn prepare(&self, raw: &Cohort) -> Result<Cohort> {
        if raw.feature_names != self.feature_names {
            return Err(Error::SchemaMismatch(format!(
                "model expects features {:?}, got {:?}",
                self.feature_names, raw.feature_names
            )));
        }
        self.standardization.apply(&self.imputer.apply(raw)?)
    }

    /// Predictions for already prepared rows.
    pub fn predict_prepared(&self, x: ArrayView2<f64>) -> Result<Vec<Prediction>> {
        match &self.network {
            Network::Mlp { params, .. } => Ok(params
                .predict_proba(x)?
                .into_iter()
                .map(|p| Prediction {
                    probability: p,
                    variance: None,
                    confidence: None,
                })
                .collect()),
            Network::Vdp {
                params, variance_cdf, ..
            } => Ok(params
                .predict_batch(x)?
                .into_iter()
                .map(|p| Prediction {
                    probability: p.probability,
                    variance: Some(p.variance),
                    confidence: Some(variance_cdf.confidence(p.variance)),
                })
                .collect()),
        }
    }

    pub fn predict(&self, raw: &Cohort) -> Result<Vec<Prediction>> {
        let prepared = self.prepare(raw)?;
        self.predict_prepared(prepared.x.view())
    }

    /// Prediction for one raw feature row; `None` marks a missing value.
    pub fn predict_row(&self, values: &[Option<f64>]) -> Result<Prediction> {
        let d = self.feature_names.len();
        if values.len() != d {
            return Err(Error::ShapeMismatch(format!("{} values for {d} features", values.len())));
        }
        let x = Array2::from_shape_fn((1, d), |(_, j)| values[j].unwrap_or(0.0));
        let mask = Array2::from_shape_fn((1, d), |(_, j)| values[j].is_none());
        let raw = Cohort::with_mask(self.feature_names.clone(), x, mask, vec![0])?;
        Ok(self.predict(&raw)?[0])
    }

    pub fn scores(&self, raw: &Cohort) -> Result<Vec<f64>> {
        Ok(self.predict(raw)?.iter().map(|p| p.probability).collect())
    }
}
