//! Versioned JSON persistence for fitted models.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FittedModel;

pub const MODEL_FORMAT: &str = "vdpt.model.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub model: FittedModel,
}

impl ModelArtifact {
    pub fn new(model: FittedModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            model,
        }
    }
}

pub fn model_to_json(model: &FittedModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelArtifact::new(model.clone()))?)
}

/// Parses an artifact, checking the format tag before the body so a foreign
/// file reports a schema mismatch rather than a missing field.
pub fn model_from_json(text: &str) -> Result<FittedModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(MODEL_FORMAT) => {}
        Some(other) => return Err(Error::SchemaMismatch(format!("artifact format `{other}`, expected `{MODEL_FORMAT}`"))),
        None => return Err(Error::SchemaMismatch("artifact has no `format` field".into())),
    }
    let artifact: ModelArtifact = serde_json::from_value(value)?;
    Ok(artifact.model)
}

pub fn save_model(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel> {
    model_from_json(&fs::read_to_string(path)?)
}
