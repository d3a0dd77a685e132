//! HTTP+JSON API. Every payload carries a top-level `format` tag.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::HeaderMap;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use vdpt_core::data::Cohort;
use vdpt_core::drift::DriftReport;
use vdpt_core::influence::InfluenceConfig;

use crate::error::{Result, ServiceError};
use crate::models::{Models, TrainingStats};
use crate::ranges::ReferenceRanges;
use crate::record::{now_ms, ClinicianPrediction, NewRecord, Outcome, PatientRecord};
use crate::store::Store;

pub const RECORDS_FORMAT: &str = "vdpt.records.v1";
pub const RECORD_FORMAT: &str = "vdpt.record.v1";
pub const HEALTH_FORMAT: &str = "vdpt.health.v1";
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const TOKEN_ENV: &str = "VDPT_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub influence: InfluenceConfig,
    /// Records with outcomes needed before `/api/drift` answers.
    pub drift_floor: usize,
    /// Log events between snapshots.
    pub snapshot_every: usize,
    /// Static bearer token; `None` leaves the API open.
    #[serde(skip)]
    pub token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            influence: InfluenceConfig::default(),
            drift_floor: 10,
            snapshot_every: 100,
            token: None,
        }
    }
}

pub struct AppState {
    pub models: Option<Arc<Models>>,
    pub store: Mutex<Store>,
    pub config: ServiceConfig,
}

impl AppState {
    pub fn new(models: Option<Models>, store: Store, config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            models: models.map(Arc::new),
            store: Mutex::new(store),
            config,
        })
    }

    fn models(&self) -> Result<Arc<Models>> {
        self.models.clone().ok_or(ServiceError::ModelsUnavailable)
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        // a panic while holding the lock cannot leave a half-applied event:
        // the log write precedes the in-memory apply
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Serialize)]
struct Envelope<T> {
    format: &'static str,
    #[serde(flatten)]
    body: T,
}

fn envelope<T>(format: &'static str, body: T) -> Json<Envelope<T>> {
    Json(Envelope { format, body })
}

#[derive(Debug, Serialize)]
struct RecordBody {
    record: PatientRecord,
}

#[derive(Debug, Serialize)]
struct RecordsBody {
    records: Vec<PatientRecord>,
}

#[derive(Debug, Serialize)]
struct HealthBody {
    models_loaded: bool,
    records: usize,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/records", post(create_record).get(list_records))
        .route("/api/records/{id}", get(get_record))
        .route("/api/records/{id}/outcome", patch(set_outcome))
        .route("/api/stats", get(stats))
        .route("/api/ranges", get(ranges))
        .route("/api/drift", get(drift))
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .with_state(state)
}

async fn authorize(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Result<Response> {
    if let Some(token) = &state.config.token {
        let ok = request
            .headers()
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return Err(ServiceError::Unauthorized);
        }
    }
    Ok(next.run(request).await)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Envelope<HealthBody>> {
    envelope(
        HEALTH_FORMAT,
        HealthBody {
            models_loaded: state.models.is_some(),
            records: state.store().records().len(),
        },
    )
}

/// A validated submission.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub features: BTreeMap<String, f64>,
    pub clinician_prediction: ClinicianPrediction,
    pub cohort: Option<String>,
    pub idempotency_key: Option<String>,
}

/// Parses a POST body. The clinician prediction is checked before anything
/// else, so a request lacking it is always a workflow violation (422), even
/// when the rest of the body is unreadable.
pub fn parse_submission(body: &[u8], header_key: Option<&str>) -> Result<Submission> {
    let value: Value = serde_json::from_slice(body).map_err(|_| ServiceError::MissingClinicianPrediction)?;
    let obj = value.as_object().ok_or(ServiceError::MissingClinicianPrediction)?;
    let clinician_prediction = match obj.get("clinician_prediction") {
        None | Some(Value::Null) => return Err(ServiceError::MissingClinicianPrediction),
        Some(Value::String(s)) => match s.as_str() {
            "survive" => ClinicianPrediction::Survive,
            "die" => ClinicianPrediction::Die,
            other => return Err(ServiceError::InvalidClinicianPrediction(other.to_string())),
        },
        Some(other) => return Err(ServiceError::InvalidClinicianPrediction(other.to_string())),
    };
    let features = match obj.get("features") {
        Some(Value::Object(m)) => m
            .iter()
            .map(|(k, v)| {
                v.as_f64()
                    .map(|x| (k.clone(), x))
                    .ok_or_else(|| ServiceError::BadRequest(format!("feature `{k}` must be a number")))
            })
            .collect::<Result<BTreeMap<_, _>>>()?,
        _ => return Err(ServiceError::BadRequest("`features` must be an object of numbers".into())),
    };
    let text = |key: &str| -> Result<Option<String>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(ServiceError::BadRequest(format!("`{key}` must be a string"))),
        }
    };
    let cohort = text("cohort")?;
    let idempotency_key = match header_key {
        Some(k) => Some(k.to_string()),
        None => text("idempotency_key")?,
    };
    Ok(Submission {
        features,
        clinician_prediction,
        cohort,
        idempotency_key,
    })
}

async fn create_record(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Envelope<RecordBody>>> {
    let header_key = match headers.get(IDEMPOTENCY_HEADER) {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ServiceError::BadRequest("idempotency key must be ASCII".into()))?
                .to_string(),
        ),
        None => None,
    };
    let submission = parse_submission(&body, header_key.as_deref())?;
    let models = state.models()?;
    let values = models.validate_features(&submission.features)?;
    let existing = submission
        .idempotency_key
        .as_deref()
        .and_then(|k| state.store().find_by_key(k).cloned());
    if let Some(existing) = existing {
        return Ok(envelope(RECORD_FORMAT, RecordBody { record: existing }));
    }
    let influence = state.config.influence;
    let outputs = tokio::task::spawn_blocking(move || models.score(&values, &influence))
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))??;
    let record = state.store().create(NewRecord {
        created_ms: now_ms(),
        features: submission.features,
        clinician_prediction: submission.clinician_prediction,
        outputs,
        cohort: submission.cohort,
        idempotency_key: submission.idempotency_key,
    })?;
    Ok(envelope(RECORD_FORMAT, RecordBody { record }))
}

async fn list_records(State(state): State<Arc<AppState>>) -> Json<Envelope<RecordsBody>> {
    let records = state.store().records().to_vec();
    envelope(RECORDS_FORMAT, RecordsBody { records })
}

async fn get_record(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Envelope<RecordBody>>> {
    let record = state.store().get(&id).cloned().ok_or(ServiceError::NotFound(id))?;
    Ok(envelope(RECORD_FORMAT, RecordBody { record }))
}

#[derive(Debug, Deserialize)]
struct OutcomeBody {
    outcome: Outcome,
}

async fn set_outcome(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Envelope<RecordBody>>> {
    let mut store = state.store();
    if store.get(&id).is_none() {
        return Err(ServiceError::NotFound(id));
    }
    let parsed: OutcomeBody = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::BadRequest(format!("expected {{\"outcome\": \"survived\" | \"died\"}}: {e}")))?;
    let record = store.set_outcome(&id, parsed.outcome, now_ms())?;
    Ok(envelope(RECORD_FORMAT, RecordBody { record }))
}

async fn stats(State(state): State<Arc<AppState>>) -> Result<Json<TrainingStats>> {
    Ok(Json(state.models()?.stats().clone()))
}

async fn ranges(State(state): State<Arc<AppState>>) -> Result<Json<ReferenceRanges>> {
    Ok(Json(state.models()?.ranges().clone()))
}

/// Records with outcomes as a raw labelled cohort in model feature order.
pub fn outcome_cohort(records: &[PatientRecord], feature_names: &[String]) -> Result<Cohort> {
    let done: Vec<&PatientRecord> = records.iter().filter(|r| r.outcome.is_some()).collect();
    let mut x = Array2::zeros((done.len(), feature_names.len()));
    for (i, r) in done.iter().enumerate() {
        for (j, name) in feature_names.iter().enumerate() {
            x[[i, j]] = *r
                .features
                .get(name)
                .ok_or_else(|| ServiceError::BadRequest(format!("record `{}` lacks `{name}`", r.id)))?;
        }
    }
    let y = done.iter().map(|r| r.outcome.expect("filtered").label()).collect();
    Ok(Cohort::new(feature_names.to_vec(), x, y)?)
}

async fn drift(State(state): State<Arc<AppState>>) -> Result<Json<DriftReport>> {
    let models = state.models()?;
    let records = state.store().records().to_vec();
    let have = records.iter().filter(|r| r.outcome.is_some()).count();
    let needed = state.config.drift_floor;
    if have < needed {
        return Err(ServiceError::InsufficientRecords { needed, have });
    }
    let current = outcome_cohort(&records, models.feature_names())?;
    let report = tokio::task::spawn_blocking(move || models.drift(&current))
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))??;
    Ok(Json(report))
}
