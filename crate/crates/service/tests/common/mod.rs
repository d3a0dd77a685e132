#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use vdpt_core::data::{generate_synthetic_cohort, Cohort, ShiftSpec};
use vdpt_core::influence::InfluenceConfig;
use vdpt_core::mlp::TrainConfig;
use vdpt_core::model::{FittedModel, ModelConfig};
use vdpt_core::numeric::SeededRng;
use vdpt_core::vdp::VdpTrainConfig;
use vdpt_service::api::{router, AppState, ServiceConfig};
use vdpt_service::models::Models;
use vdpt_service::ranges::ReferenceRanges;
use vdpt_service::store::Store;

pub const RANGES: &str = include_str!("../../config/ranges.example.json");

pub fn reference() -> Cohort {
    generate_synthetic_cohort(400, 0.2, &ShiftSpec::none(), 0.05, &mut SeededRng::new(11)).unwrap()
}

pub fn small_configs() -> (ModelConfig, ModelConfig) {
    (
        ModelConfig::Vdp {
            train: VdpTrainConfig {
                hidden: vec![8, 4],
                epochs: 4,
                ..VdpTrainConfig::default_profile()
            },
        },
        ModelConfig::Mlp {
            train: TrainConfig {
                hidden: vec![8, 4],
                epochs: 60,
                ..TrainConfig::default_profile()
            },
            imbalance: None,
        },
    )
}

pub fn fitted() -> (FittedModel, FittedModel, Cohort) {
    let reference = reference();
    let (v, m) = small_configs();
    (
        FittedModel::fit(&reference, &v).unwrap(),
        FittedModel::fit(&reference, &m).unwrap(),
        reference,
    )
}

pub fn models() -> Models {
    let (vdp, mlp, reference) = fitted();
    Models::new(vdp, mlp, reference, ReferenceRanges::from_json(RANGES).unwrap()).unwrap()
}

pub fn service_config() -> ServiceConfig {
    ServiceConfig {
        influence: InfluenceConfig {
            subsample: 40,
            ..InfluenceConfig::default()
        },
        drift_floor: 10,
        snapshot_every: 5,
        token: None,
    }
}

pub fn state(models: Option<Models>) -> Arc<AppState> {
    AppState::new(models, Store::in_memory(), service_config())
}

/// Raw row `i` of `cohort` as a request feature object. Missing cells are
/// left out.
pub fn features(cohort: &Cohort, i: usize) -> Value {
    let mut m = serde_json::Map::new();
    for (j, name) in cohort.feature_names.iter().enumerate() {
        if !cohort.missing[[i, j]] {
            m.insert(name.clone(), json!(cohort.x[[i, j]]));
        }
    }
    Value::Object(m)
}

pub async fn call(state: &Arc<AppState>, method: Method, uri: &str, body: Option<Vec<u8>>, headers: &[(&str, &str)]) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b)).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn post_json(state: &Arc<AppState>, body: &Value) -> (StatusCode, Value) {
    call(state, Method::POST, "/api/records", Some(serde_json::to_vec(body).unwrap()), &[]).await
}

/// Complete rows (no missing cells) suitable for submission.
pub fn patients(n: usize, shift: &ShiftSpec, seed: u64) -> Cohort {
    generate_synthetic_cohort(n, 0.2, shift, 0.0, &mut SeededRng::new(seed)).unwrap()
}
