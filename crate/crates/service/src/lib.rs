//! Deployment layer for the mortality risk models: the `vdpt` command line,
//! the HTTP API and the record store behind it.
//!
//! The API enforces the clinician workflow: a record is scored only when it
//! carries the clinician's own prediction, so model output is never shown
//! before that prediction exists.

pub mod api;
pub mod cli;
pub mod error;
pub mod models;
pub mod ranges;
pub mod record;
pub mod store;

pub use error::{Result, ServiceError};
