mod common;

use axum::http::{Method, StatusCode};
use common::*;
use serde_json::{json, Value};
use vdpt_core::data::{Cohort, ShiftSpec};
use vdpt_core::influence::{fi_local, Objective};
use vdpt_core::model::ModelKind;
use vdpt_core::numeric::stats::sorted_copy;

fn body(cohort: &Cohort, i: usize, prediction: &str) -> Value {
    json!({ "features": features(cohort, i), "clinician_prediction": prediction })
}

fn leaks_model_output(v: &Value) -> bool {
    let text = v.to_string();
    ["probability", "confidence", "outputs", "explanation"].iter().any(|k| text.contains(k))
}

#[tokio::test]
async fn missing_clinician_prediction_is_always_422() {
    let patients = patients(5, &ShiftSpec::none(), 1);
    let good = features(&patients, 0);
    let bodies: Vec<Vec<u8>> = vec![
        serde_json::to_vec(&json!({ "features": good })).unwrap(),
        serde_json::to_vec(&json!({ "features": good, "clinician_prediction": null })).unwrap(),
        serde_json::to_vec(&json!({ "features": { "lactate": "high" } })).unwrap(),
        serde_json::to_vec(&json!({})).unwrap(),
        serde_json::to_vec(&json!([1, 2])).unwrap(),
        b"{ not json".to_vec(),
        Vec::new(),
    ];
    for state in [state(Some(models())), state(None)] {
        for b in &bodies {
            let (status, v) = call(&state, Method::POST, "/api/records", Some(b.clone()), &[]).await;
            assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{}", String::from_utf8_lossy(b));
            assert_eq!(v["code"], "missing_clinician_prediction");
            assert!(!leaks_model_output(&v), "{v}");
        }
        let (status, _) = post_json(&state, &json!({ "features": good, "clinician_prediction": "maybe" })).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        let (_, list) = call(&state, Method::GET, "/api/records", None, &[]).await;
        assert_eq!(list["records"].as_array().unwrap().len(), 0);
    }
}

#[tokio::test]
async fn models_not_loaded_is_503() {
    let patients = patients(3, &ShiftSpec::none(), 2);
    let state = state(None);
    let (status, v) = post_json(&state, &body(&patients, 0, "survive")).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["code"], "models_unavailable");
    for uri in ["/api/stats", "/api/ranges", "/api/drift"] {
        assert_eq!(call(&state, Method::GET, uri, None, &[]).await.0, StatusCode::SERVICE_UNAVAILABLE);
    }
}

#[tokio::test]
async fn malformed_features_are_400() {
    let state = state(Some(models()));
    let patients = patients(3, &ShiftSpec::none(), 3);
    let mut missing = features(&patients, 0);
    missing.as_object_mut().unwrap().remove("albumin");
    let mut extra = features(&patients, 0);
    extra["sofa"] = json!(3.0);
    let mut text = features(&patients, 0);
    text["age"] = json!("old");
    let mut absurd = features(&patients, 0);
    absurd["map"] = json!(1.0e4);
    for f in [missing, extra, text, absurd, json!([1.0])] {
        let (status, v) = post_json(&state, &json!({ "features": f, "clinician_prediction": "die" })).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
        assert!(!leaks_model_output(&v));
    }
}

#[tokio::test]
async fn prediction_matches_library_bitwise() {
    let models = models();
    let vdp = models.model(ModelKind::Vdp).clone();
    let mlp = models.model(ModelKind::Mlp).clone();
    let reference = models.reference().clone();
    let config = service_config();
    let state = state(Some(models));
    let patients = patients(4, &ShiftSpec::none(), 4);
    for i in 0..patients.n_rows() {
        let (status, v) = post_json(&state, &body(&patients, i, "survive")).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        assert_eq!(v["format"], "vdpt.record.v1");
        let row = patients.select_rows(&[i]);
        for (key, model) in [("vdp", &vdp), ("mlp", &mlp)] {
            let expected = model.predict(&row).unwrap()[0];
            let out = &v["record"]["outputs"][key];
            assert_eq!(out["probability"].as_f64().unwrap().to_bits(), expected.probability.to_bits());
            match expected.confidence {
                Some(c) => assert_eq!(out["confidence"].as_f64().unwrap().to_bits(), c.to_bits()),
                None => assert!(out.get("confidence").is_none()),
            }
            let training = model.prepare(&reference).unwrap();
            let obj = Objective::from_model(model, training.n_rows());
            let prepared = model.prepare(&row).unwrap();
            let report = fi_local(&obj, prepared.x.row(0), &training, &config.influence, None).unwrap();
            let served: Vec<f64> = serde_json::from_value(out["explanation"]["report"]["values"].clone()).unwrap();
            assert_eq!(served, report.values);
            let toward: Vec<f64> = serde_json::from_value(out["explanation"]["toward_mortality"].clone()).unwrap();
            let sign = if report.test_label == 1 { 1.0 } else { -1.0 };
            for (t, r) in toward.iter().zip(&report.values) {
                assert_eq!(*t, sign * r);
            }
        }
    }
}

#[tokio::test]
async fn idempotency_key_returns_same_record() {
    let state = state(Some(models()));
    let patients = patients(3, &ShiftSpec::none(), 5);
    let mut b = body(&patients, 0, "die");
    b["idempotency_key"] = json!("visit-17");
    let (_, first) = post_json(&state, &b).await;
    let (_, second) = post_json(&state, &b).await;
    assert_eq!(first["record"]["id"], second["record"]["id"]);
    let header_body = serde_json::to_vec(&body(&patients, 1, "die")).unwrap();
    let h = [("idempotency-key", "visit-18")];
    let (_, third) = call(&state, Method::POST, "/api/records", Some(header_body.clone()), &h).await;
    let (_, fourth) = call(&state, Method::POST, "/api/records", Some(header_body), &h).await;
    assert_eq!(third["record"]["id"], fourth["record"]["id"]);
    assert_ne!(first["record"]["id"], third["record"]["id"]);
    let (_, list) = call(&state, Method::GET, "/api/records", None, &[]).await;
    assert_eq!(list["records"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn outcome_is_write_once() {
    let state = state(Some(models()));
    let patients = patients(2, &ShiftSpec::none(), 6);
    let (_, v) = post_json(&state, &body(&patients, 0, "survive")).await;
    let id = v["record"]["id"].as_str().unwrap().to_string();
    let uri = format!("/api/records/{id}/outcome");
    let died = Some(serde_json::to_vec(&json!({ "outcome": "died" })).unwrap());
    let survived = Some(serde_json::to_vec(&json!({ "outcome": "survived" })).unwrap());
    let (status, v) = call(&state, Method::PATCH, &uri, died, &[]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["record"]["outcome"], "died");
    let (status, v) = call(&state, Method::PATCH, &uri, survived.clone(), &[]).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "outcome_already_set");
    let (_, v) = call(&state, Method::GET, &format!("/api/records/{id}"), None, &[]).await;
    assert_eq!(v["record"]["outcome"], "died");
    let (status, _) = call(&state, Method::PATCH, "/api/records/r424242/outcome", survived, &[]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, v) = post_json(&state, &body(&patients, 1, "survive")).await;
    let uri = format!("/api/records/{}/outcome", v["record"]["id"].as_str().unwrap());
    let bad = Some(serde_json::to_vec(&json!({ "outcome": "maybe" })).unwrap());
    assert_eq!(call(&state, Method::PATCH, &uri, bad, &[]).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&state, Method::GET, "/api/records/r424242", None, &[]).await.0, StatusCode::NOT_FOUND);
}

/// Linear interpolation between order statistics, written out directly.
fn quartile(values: &[f64], p: f64) -> f64 {
    let s = sorted_copy(values);
    let pos = p * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

#[tokio::test]
async fn stats_match_recomputation() {
    let models = models();
    let reference = models.reference().clone();
    let state = state(Some(models));
    let (status, v) = call(&state, Method::GET, "/api/stats", None, &[]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["format"], "vdpt.training_stats.v1");
    let features = v["features"].as_array().unwrap();
    assert_eq!(features.len(), 12);
    for (j, f) in features.iter().enumerate() {
        let values: Vec<f64> = (0..reference.n_rows())
            .filter(|&i| !reference.missing[[i, j]])
            .map(|i| reference.x[[i, j]])
            .collect();
        assert_eq!(f["feature"], reference.feature_names[j]);
        assert_eq!(f["n"].as_u64().unwrap() as usize, values.len());
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((f["mean"].as_f64().unwrap() - mean).abs() < 1e-9 * mean.abs().max(1.0));
        for (key, p) in [("q1", 0.25), ("median", 0.5), ("q3", 0.75)] {
            assert!((f[key].as_f64().unwrap() - quartile(&values, p)).abs() < 1e-12, "{key}");
        }
        assert!(f["healthy_low"].as_f64().unwrap() < f["healthy_high"].as_f64().unwrap());
    }
}

#[tokio::test]
async fn ranges_are_served_verbatim() {
    let state = state(Some(models()));
    let (status, v) = call(&state, Method::GET, "/api/ranges", None, &[]).await;
    assert_eq!(status, StatusCode::OK);
    let file: Value = serde_json::from_str(RANGES).unwrap();
    assert_eq!(v, file);
}

async fn ingest(state: &std::sync::Arc<vdpt_service::api::AppState>, cohort: &Cohort) {
    for i in 0..cohort.n_rows() {
        let (status, v) = post_json(state, &body(cohort, i, if cohort.y[i] == 1 { "die" } else { "survive" })).await;
        if status == StatusCode::BAD_REQUEST {
            // a tail draw beyond the plausibility bounds
            continue;
        }
        assert_eq!(status, StatusCode::OK, "{v}");
        let outcome = if cohort.y[i] == 1 { "died" } else { "survived" };
        let uri = format!("/api/records/{}/outcome", v["record"]["id"].as_str().unwrap());
        let (status, _) = call(state, Method::PATCH, &uri, Some(serde_json::to_vec(&json!({ "outcome": outcome })).unwrap()), &[]).await;
        assert_eq!(status, StatusCode::OK);
    }
}

#[tokio::test]
async fn drift_needs_floor_then_flags_shift() {
    let state = state(Some(models()));
    let few = patients(9, &ShiftSpec::none(), 7);
    ingest(&state, &few).await;
    let (status, v) = call(&state, Method::GET, "/api/drift", None, &[]).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "insufficient_records");
    let shifted = patients(150, &ShiftSpec::none().shift("lactate", 2.0), 8);
    ingest(&state, &shifted).await;
    let (status, v) = call(&state, Method::GET, "/api/drift", None, &[]).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["format"], "vdpt.drift_report.v1");
    let flagged: Vec<&str> = v["features"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["flagged"] == true)
        .map(|f| f["feature"].as_str().unwrap())
        .collect();
    assert!(flagged.contains(&"lactate"), "{flagged:?}");
    assert!(v["confidence"].is_object());
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let mut config = service_config();
    config.token = Some("s3cret".into());
    let state = vdpt_service::api::AppState::new(None, vdpt_service::store::Store::in_memory(), config);
    assert_eq!(call(&state, Method::GET, "/api/health", None, &[]).await.0, StatusCode::UNAUTHORIZED);
    let wrong = [("authorization", "Bearer nope")];
    assert_eq!(call(&state, Method::GET, "/api/health", None, &wrong).await.0, StatusCode::UNAUTHORIZED);
    let right = [("authorization", "Bearer s3cret")];
    let (status, v) = call(&state, Method::GET, "/api/health", None, &right).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["models_loaded"], false);
}

#[tokio::test]
async fn served_records_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let models = std::sync::Arc::new(models());
    let open = |models: std::sync::Arc<vdpt_service::models::Models>| {
        let store = vdpt_service::store::Store::open(dir.path(), 4).unwrap();
        std::sync::Arc::new(vdpt_service::api::AppState {
            models: Some(models),
            store: std::sync::Mutex::new(store),
            config: service_config(),
        })
    };
    let state = open(models.clone());
    ingest(&state, &patients(7, &ShiftSpec::none(), 9)).await;
    let (_, before) = call(&state, Method::GET, "/api/records", None, &[]).await;
    let state_before = state.store.lock().unwrap().state().clone();
    drop(state);
    let state = open(models);
    let (_, after) = call(&state, Method::GET, "/api/records", None, &[]).await;
    assert_eq!(before, after);
    assert_eq!(state.store.lock().unwrap().state(), &state_before);
}
