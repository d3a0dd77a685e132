//! Mortality risk models with analytic uncertainty and influence-function
//! explanations.
//!
//! Two networks share one data pipeline: a point-estimate MLP and a
//! variational density propagation (VDP) network that carries the mean and
//! covariance of every activation analytically. Around them sit the
//! confidence score, influence-function explanations, drift statistics and
//! cross-validated evaluation.

pub mod artifact;
pub mod data;
pub mod drift;
pub mod error;
pub mod eval;
pub mod influence;
pub mod mlp;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod params;
pub mod uncertainty;
pub mod vdp;

pub use error::{Error, Result};
