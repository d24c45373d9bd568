use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use xrdmap::plot::PlotData;
use xrdmap::service::{router, same_params_request, AppState, SessionView, StepClock};
use xrdmap::signal::Threshold;
use xrdmap::synth::{fixtures, generate};
use xrdmap::{pipeline, PhaseId, PhaseMapResult};

fn over_split_state() -> AppState {
    let f = fixtures::over_split(3, 300);
    let out = generate(&f.config).unwrap();
    let mut result = pipeline::run(
        &out.dataset,
        &f.binarization,
        Threshold::Fixed(f.binarization.intensity_threshold),
        &f.mapping,
    )
    .unwrap();
    result.params.seed = Some(f.config.seed);
    AppState::new(out.dataset, result, StepClock::new(1_700_000_000_000))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => builder
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn session(app: &Router) -> (Vec<u8>, SessionView) {
    let (status, bytes) = call(app, "GET", "/api/session", None).await;
    assert_eq!(status, StatusCode::OK);
    let view = serde_json::from_slice(&bytes).unwrap();
    (bytes, view)
}

async fn plot(app: &Router) -> PlotData {
    let (status, bytes) = call(app, "GET", "/api/plot-data", None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_slice(&bytes).unwrap()
}

fn assert_colors_consistent(data: &PlotData) {
    let colors: BTreeMap<PhaseId, &str> = data.phases.iter().map(|p| (p.id, p.color.as_str())).collect();
    let distinct: BTreeSet<&str> = colors.values().copied().collect();
    assert_eq!(distinct.len(), colors.len(), "each phase has its own color");
    for s in &data.samples {
        for p in &s.phases {
            assert!(colors.contains_key(p), "sample {} refers to unknown phase {p}", s.id);
        }
    }
}

async fn wait_for_job(app: &Router, id: u64) -> Value {
    for _ in 0..500 {
        let (status, bytes) = call(app, "GET", &format!("/api/job/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let job: Value = serde_json::from_slice(&bytes).unwrap();
        if job["status"] != "running" {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test]
async fn merge_undo_recompute_session() {
    let state = over_split_state();
    let app = router(state.clone(), None);

    let (before_bytes, before) = session(&app).await;
    assert_eq!(before.phases.len(), 4);
    let plot_before = plot(&app).await;
    assert_colors_consistent(&plot_before);
    let (_, export_before) = call(&app, "GET", "/api/export", None).await;

    let (status, bytes) = call(&app, "POST", "/api/merge", Some(json!({"ids": ["P0", "P1"]}))).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&bytes));
    let merged: SessionView = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(merged.phases.len(), 3);
    assert_eq!(merged.lineage.len(), 1);
    assert_eq!(merged.lineage[0].stamp.timestamp_ms, 1_700_000_000_000);

    let plot_after = plot(&app).await;
    assert_colors_consistent(&plot_after);
    let new_id = merged.lineage[0].merged[0].1;
    let was_split: Vec<&str> = plot_before
        .samples
        .iter()
        .filter(|s| s.phases.iter().any(|p| p.0 <= 1))
        .map(|s| s.id.as_str())
        .collect();
    assert!(!was_split.is_empty());
    for s in plot_after.samples.iter().filter(|s| was_split.contains(&s.id.as_str())) {
        assert!(s.phases.contains(&new_id), "{} lost its phase", s.id);
    }
    let merged_color = plot_after.color_of(new_id).to_string();
    let wafer = xrdmap::plot::wafer_svg(&plot_after, Default::default());
    let expected = plot_after.samples.iter().filter(|s| s.phases.contains(&new_id)).count();
    assert_eq!(
        wafer
            .matches(&format!("fill=\"{merged_color}\" data-phase=\"{new_id}\""))
            .count(),
        expected
    );

    let (status, _) = call(&app, "POST", "/api/undo", None).await;
    assert_eq!(status, StatusCode::OK);
    let (after_undo, _) = session(&app).await;
    assert_eq!(after_undo, before_bytes, "undo restores the session byte for byte");
    let (status, _) = call(&app, "POST", "/api/undo", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let request = same_params_request(&state.current()).unwrap();
    let (status, bytes) = call(&app, "POST", "/api/recompute", Some(request)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job: Value = serde_json::from_slice(&bytes).unwrap();
    let done = wait_for_job(&app, job["id"].as_u64().unwrap()).await;
    assert_eq!(done["status"], "done");
    assert_eq!(done["phases"], 4);
    let (_, export_after) = call(&app, "GET", "/api/export", None).await;
    assert_eq!(export_after, export_before);
    let a = PhaseMapResult::from_json(std::str::from_utf8(&export_after).unwrap()).unwrap();
    assert_eq!(a.catalog.len(), 4);
}

#[tokio::test]
#[allow(clippy::await_holding_lock)]
async fn mutations_conflict_with_running_job() {
    let state = over_split_state();
    let app = router(state.clone(), None);
    let request = same_params_request(&state.current()).unwrap();
    let id = {
        let _hold = state.hold_jobs();
        let (status, bytes) = call(&app, "POST", "/api/recompute", Some(request.clone())).await;
        assert_eq!(status, StatusCode::ACCEPTED);
        let job: Value = serde_json::from_slice(&bytes).unwrap();
        let id = job["id"].as_u64().unwrap();

        let (_, view) = session(&app).await;
        assert_eq!(view.running_job, Some(id));
        for (uri, body) in [
            ("/api/merge", Some(json!({"ids": ["P0", "P1"]}))),
            ("/api/undo", None),
            ("/api/recompute", Some(request.clone())),
        ] {
            let (status, bytes) = call(&app, "POST", uri, body).await;
            assert_eq!(status, StatusCode::CONFLICT, "{uri}");
            let err: Value = serde_json::from_slice(&bytes).unwrap();
            assert_eq!(err["error"], "conflict");
        }
        let (status, _) = call(&app, "GET", "/api/plot-data", None).await;
        assert_eq!(status, StatusCode::OK, "reads proceed during a job");
        id
    };
    assert_eq!(wait_for_job(&app, id).await["status"], "done");
    let (status, _) = call(&app, "POST", "/api/merge", Some(json!({"ids": ["P0", "P1"]}))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn validation_and_lookup_errors() {
    let app = router(over_split_state(), None);
    for body in [
        json!({"ids": ["P0"]}),
        json!({"ids": ["P0", "P9"]}),
        json!({"ids": ["bogus", "P1"]}),
        json!({"ids": "P0,P1"}),
        json!({}),
    ] {
        let (status, bytes) = call(&app, "POST", "/api/merge", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        let err: Value = serde_json::from_slice(&bytes).unwrap();
        assert!(err["message"].is_string());
    }
    let (status, _) = call(&app, "POST", "/api/merge", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    for body in [
        json!({"th": 0, "ot": 5, "intensity_threshold": 300.0, "windows": 0}),
        json!({"th": 100, "ot": 5, "intensity_threshold": 300.0, "windows": 100}),
        json!({"th": 0, "ot": 0, "intensity_threshold": 300.0, "windows": 100}),
        json!({"th": 0, "ot": 5, "intensity_threshold": -1.0, "windows": 100}),
        json!({"th": 0, "ot": 5, "intensity_threshold": "high", "windows": 100}),
        json!({"th": 0, "ot": 5, "windows": 100}),
    ] {
        let (status, _) = call(&app, "POST", "/api/recompute", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }

    for uri in ["/api/job/1", "/api/job/999", "/api/job/abc"] {
        let (status, _) = call(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn auto_threshold_recompute_and_export_headers() {
    let state = over_split_state();
    let app = router(state.clone(), None);
    let (status, bytes) = call(
        &app,
        "POST",
        "/api/recompute",
        Some(json!({"th": 0, "ot": 5, "intensity_threshold": "auto", "windows": 100})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(wait_for_job(&app, job["id"].as_u64().unwrap()).await["status"], "done");
    let record = state.current().params.binarization.unwrap();
    assert!(record.params.intensity_threshold > 0.0);

    let resp = app
        .clone()
        .oneshot(Request::builder().uri("/api/export").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "application/json");
    assert!(resp.headers()["content-disposition"]
        .to_str()
        .unwrap()
        .contains("attachment"));
}

#[tokio::test]
async fn serves_static_client() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>client</title>").unwrap();
    let app = router(over_split_state(), Some(dir.path().to_path_buf()));
    let (status, bytes) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(bytes).unwrap().contains("client"));
    let (status, _) = call(&app, "GET", "/api/session", None).await;
    assert_eq!(status, StatusCode::OK);
}
