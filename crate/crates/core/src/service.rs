//! JSON-over-HTTP session for the interactive merge client.
//!
//! One dataset and one result per server. Reads share a lock; every
//! mutation takes the write lock, so session state is linearizable. The
//! visible result is always the session base with the session's lineage
//! replayed on top of it.
//!
//! | route | effect |
//! |---|---|
//! | `GET /api/session` | params, phase summaries, lineage |
//! | `GET /api/plot-data` | plot-data JSON |
//! | `POST /api/merge` `{"ids": ["P0", "P1"]}` | manual merge |
//! | `POST /api/undo` | drop the last merge |
//! | `POST /api/recompute` `{th, ot, intensity_threshold, windows}` | background job |
//! | `GET /api/job/{id}` | job status |
//! | `GET /api/export` | result JSON |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::{manual_merge, replay};
use crate::model::{Dataset, LineageEntry, PhaseId, PhaseMapResult, RunParams, Stamp};
use crate::phasemap::PhaseMapParams;
use crate::plot::{plot_data, PlotData};
use crate::signal::{BinarizationParams, Threshold, ThresholdSource};

pub const ACTOR: &str = "service";

/// Source of lineage timestamps.
pub trait Clock: Send + Sync + 'static {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        Stamp::now(ACTOR).timestamp_ms
    }
}

/// Returns a fixed start time, advancing by one millisecond per call.
pub struct StepClock(AtomicU64);

impl StepClock {
    pub fn new(start_ms: u64) -> Self {
        StepClock(AtomicU64::new(start_ms))
    }
}

impl Clock for StepClock {
    fn now_ms(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done { phases: usize },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobInfo {
    pub id: u64,
    #[serde(flatten)]
    pub status: JobStatus,
}

struct Session {
    base: PhaseMapResult,
    current: PhaseMapResult,
    jobs: BTreeMap<u64, JobStatus>,
    running: Option<u64>,
    next_job: u64,
}

struct Inner {
    dataset: Arc<Dataset>,
    clock: Box<dyn Clock>,
    session: RwLock<Session>,
    job_gate: Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(dataset: Dataset, result: PhaseMapResult, clock: impl Clock) -> Self {
        AppState(Arc::new(Inner {
            dataset: Arc::new(dataset),
            clock: Box::new(clock),
            session: RwLock::new(Session {
                base: result.clone(),
                current: result,
                jobs: BTreeMap::new(),
                running: None,
                next_job: 1,
            }),
            job_gate: Mutex::new(()),
        }))
    }

    /// Recompute jobs wait while the returned guard is alive.
    pub fn hold_jobs(&self) -> MutexGuard<'_, ()> {
        self.0.job_gate.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn current(&self) -> PhaseMapResult {
        self.0.session.read().expect("session lock").current.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub id: PhaseId,
    pub peak_count: usize,
    pub member_count: usize,
    pub peaks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub params: RunParams,
    pub phases: Vec<PhaseSummary>,
    pub sample_count: usize,
    pub mixed_count: usize,
    pub outlier_count: usize,
    pub lineage: Vec<LineageEntry>,
    pub running_job: Option<u64>,
}

fn view(s: &Session) -> SessionView {
    let r = &s.current;
    SessionView {
        params: r.params.clone(),
        phases: r
            .catalog
            .phases
            .iter()
            .map(|p| PhaseSummary {
                id: p.id,
                peak_count: p.representative.peak_count(),
                member_count: p.members.len(),
                peaks: p.representative.peaks().to_vec(),
            })
            .collect(),
        sample_count: r.memberships.len(),
        mixed_count: r.memberships.mixed().count(),
        outlier_count: r.memberships.outliers().count(),
        lineage: r.lineage.clone(),
        running_job: s.running,
    }
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Conflict(String),
    NotFound(String),
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => ApiError::Internal(e.to_string()),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, kind, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "validation", m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, "conflict", m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
        };
        (code, Json(serde_json::json!({ "error": kind, "message": msg }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn reject_if_running(s: &Session) -> ApiResult<()> {
    match s.running {
        Some(id) => Err(ApiError::Conflict(format!("recompute job {id} is running"))),
        None => Ok(()),
    }
}

async fn get_session(State(app): State<AppState>) -> Json<SessionView> {
    Json(view(&app.0.session.read().expect("session lock")))
}

async fn get_plot_data(State(app): State<AppState>) -> Json<PlotData> {
    let s = app.0.session.read().expect("session lock");
    Json(plot_data(&s.current, &app.0.dataset))
}

#[derive(Debug, Deserialize)]
pub struct MergeRequest {
    pub ids: Vec<String>,
}

fn body<T>(payload: std::result::Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::BadRequest(e.body_text()))
}

async fn post_merge(
    State(app): State<AppState>,
    payload: std::result::Result<Json<MergeRequest>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let req = body(payload)?;
    let ids = req
        .ids
        .iter()
        .map(|s| s.parse::<PhaseId>())
        .collect::<Result<Vec<_>>>()?;
    let mut s = app.0.session.write().expect("session lock");
    reject_if_running(&s)?;
    let stamp = Stamp::new(ACTOR, app.0.clock.now_ms());
    s.current = manual_merge(&s.current, &ids, stamp)?;
    Ok(Json(view(&s)))
}

async fn post_undo(State(app): State<AppState>) -> ApiResult<Json<SessionView>> {
    let mut s = app.0.session.write().expect("session lock");
    reject_if_running(&s)?;
    let kept = s.base.lineage.len();
    let n = s.current.lineage.len();
    if n <= kept {
        return Err(ApiError::BadRequest("nothing to undo".into()));
    }
    let mut next = replay(&s.base, &s.current.lineage[kept..n - 1])?;
    let mut lineage = s.base.lineage.clone();
    lineage.append(&mut next.lineage);
    next.lineage = lineage;
    s.current = next;
    Ok(Json(view(&s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ThresholdArg {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RecomputeRequest {
    pub th: usize,
    pub ot: usize,
    pub intensity_threshold: ThresholdArg,
    pub windows: usize,
}

async fn post_recompute(
    State(app): State<AppState>,
    payload: std::result::Result<Json<RecomputeRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<JobInfo>)> {
    let req = body(payload)?;
    let threshold = match req.intensity_threshold {
        ThresholdArg::Value(t) if t.is_finite() && t >= 0.0 => Threshold::Fixed(t),
        ThresholdArg::Value(t) => return Err(ApiError::BadRequest(format!("bad intensity_threshold {t}"))),
        ThresholdArg::Keyword(AutoKeyword::Auto) => Threshold::Auto,
    };
    let mut s = app.0.session.write().expect("session lock");
    reject_if_running(&s)?;

    let previous = &s.current.params;
    let mut binarization = previous
        .binarization
        .as_ref()
        .map(|r| r.params.clone())
        .unwrap_or_else(|| BinarizationParams::new(0.0, req.windows));
    binarization.window_count = req.windows;
    if let Threshold::Fixed(t) = threshold {
        binarization.intensity_threshold = t;
    }
    binarization.validate(app.0.dataset.grid.len())?;
    let mapping = PhaseMapParams {
        th: req.th,
        ot: req.ot,
        max_mixed_constituents: previous.max_mixed_constituents,
    };
    mapping.validate(req.windows)?;
    let seed = previous.seed;

    let id = s.next_job;
    s.next_job += 1;
    s.running = Some(id);
    s.jobs.insert(id, JobStatus::Running);
    drop(s);

    let worker = app.clone();
    tokio::task::spawn_blocking(move || {
        drop(worker.hold_jobs());
        let outcome = crate::pipeline::run(&worker.0.dataset, &binarization, threshold, &mapping);
        let mut s = worker.0.session.write().expect("session lock");
        let status = match outcome {
            Ok(mut result) => {
                result.params.seed = seed;
                let phases = result.catalog.len();
                s.base = result.clone();
                s.current = result;
                JobStatus::Done { phases }
            }
            Err(e) => JobStatus::Failed { error: e.to_string() },
        };
        s.jobs.insert(id, status);
        s.running = None;
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(JobInfo {
            id,
            status: JobStatus::Running,
        }),
    ))
}

async fn get_job(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobInfo>> {
    let s = app.0.session.read().expect("session lock");
    id.parse::<u64>()
        .ok()
        .and_then(|id| s.jobs.get(&id).map(|st| JobInfo { id, status: st.clone() }))
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))
}

async fn get_export(State(app): State<AppState>) -> ApiResult<Response> {
    let body = app.0.session.read().expect("session lock").current.to_json()?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/json"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"result.json\""),
        ],
        body,
    )
        .into_response())
}

/// Routes only; `static_dir`, when given, serves the browser client for
/// every other path.
pub fn router(app: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/plot-data", get(get_plot_data))
        .route("/api/merge", post(post_merge))
        .route("/api/undo", post(post_undo))
        .route("/api/recompute", post(post_recompute))
        .route("/api/job/{id}", get(get_job))
        .route("/api/export", get(get_export))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(app: AppState, addr: SocketAddr, static_dir: Option<PathBuf>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app, static_dir)).await?;
    Ok(())
}

/// Recompute requests that reproduce `result` exactly, when it carries a
/// binarization record.
pub fn same_params_request(result: &PhaseMapResult) -> Option<serde_json::Value> {
    let b = result.params.binarization.as_ref()?;
    let threshold = match b.threshold_source {
        ThresholdSource::Auto => serde_json::json!("auto"),
        ThresholdSource::Explicit => serde_json::json!(b.params.intensity_threshold),
    };
    Some(serde_json::json!({
        "th": result.params.th,
        "ot": result.params.ot,
        "intensity_threshold": threshold,
        "windows": b.params.window_count,
    }))
}
