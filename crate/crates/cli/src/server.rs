//! HTTP review service.
//!
//! Every route sits behind a static bearer token. Writes to the assessment
//! store take an exclusive lock, so submissions for the same (alert,
//! reviewer) are serialized and the last writer wins; reads take a shared
//! lock and see a consistent state.

use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{Duration, Utc};
use serde::{Deserialize, Serialize};

use coda_core::evaluation::{AssessmentRecord, EvaluationConfig};
use coda_core::pipeline::{read_cohort, read_manifest, read_models, read_sidecar};
use coda_core::review::{read_assignments, AlertContext, AuditEntry, ContextSource, ReviewStats, ReviewStore};
use coda_core::scoring::{read_alerts, Alert};
use coda_core::Error;

/// Contributions listed per alert context.
pub const TOP_CONTRIBUTIONS: usize = 10;

/// Submissions between store snapshots.
pub const SNAPSHOT_EVERY: u64 = 25;

pub struct ServiceState {
    store: RwLock<ReviewStore>,
    context: ContextSource,
    token: String,
}

impl ServiceState {
    pub fn new(store: ReviewStore, context: ContextSource, token: impl Into<String>) -> Self {
        ServiceState {
            store: RwLock::new(store),
            context,
            token: token.into(),
        }
    }

    /// Loads a finished run directory. Assessments persist under
    /// `<run>/review/`.
    pub fn from_run_dir(run: &Path, token: impl Into<String>, horizon_hours: i64) -> coda_core::Result<Self> {
        let manifest = read_manifest(&run.join("manifest.json"))?;
        let sidecar = read_sidecar(&run.join("catalog.json"))?;
        let records = read_cohort(&manifest.config.paths.cohort)?;
        let models = read_models(&run.join("models"))?;
        let alerts = read_alerts(std::io::BufReader::new(std::fs::File::open(run.join("alerts.jsonl"))?))?;
        let assignments = read_assignments(std::fs::File::open(run.join("assignments.json"))?)?;
        let evaluation: EvaluationConfig = manifest.config.review.evaluation();
        let store = ReviewStore::open(&run.join("review"), alerts, assignments, evaluation)?;
        let context = ContextSource {
            records: records.into_iter().map(|r| (r.patient_id.clone(), r)).collect(),
            catalog: sidecar.catalog,
            stats: sidecar.stats,
            models: models.into_iter().map(|m| (m.action.code.clone(), m)).collect(),
            horizon: Duration::hours(horizon_hours),
            top_contributions: TOP_CONTRIBUTIONS,
        };
        Ok(Self::new(store, context, token))
    }

    /// Runs `f` against the store under a shared lock.
    pub fn with_store<R>(&self, f: impl FnOnce(&ReviewStore) -> R) -> R {
        f(&self.store.read().expect("store lock poisoned"))
    }

    /// Writes a snapshot of the current assessments.
    pub fn snapshot(&self) -> coda_core::Result<()> {
        self.store.read().expect("store lock poisoned").snapshot()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssignedAlert {
    pub alert: Alert,
    pub assessment: Option<AssessmentRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssignedList {
    pub reviewer_id: String,
    pub group_id: usize,
    pub completed: usize,
    pub total: usize,
    pub alerts: Vec<AssignedAlert>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Forbidden(_) => StatusCode::FORBIDDEN,
            Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type Shared = Arc<ServiceState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/reviewers/{reviewer_id}/assignments", get(list_assigned))
        .route("/api/alerts/{alert_id}/context", get(alert_context))
        .route("/api/assessments", post(submit_assessment))
        .route("/api/stats", get(stats))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn require_token(State(state): State<Shared>, req: Request, next: Next) -> Response {
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match presented {
        Some(t) if !state.token.is_empty() && t == state.token => next.run(req).await,
        _ => {
            let mut resp = ApiError(StatusCode::UNAUTHORIZED, "missing or invalid bearer token".into()).into_response();
            resp.headers_mut()
                .insert(header::WWW_AUTHENTICATE, header::HeaderValue::from_static("Bearer"));
            resp
        }
    }
}

async fn list_assigned(State(state): State<Shared>, UrlPath(reviewer_id): UrlPath<String>) -> Result<Json<AssignedList>, ApiError> {
    let store = state.store.read().expect("store lock poisoned");
    let assignment = store.assignment(&reviewer_id)?;
    let alerts = assignment
        .alert_ids
        .iter()
        .map(|id| {
            Ok(AssignedAlert {
                alert: store.alert(id)?.clone(),
                assessment: store.assessment(id, &reviewer_id).cloned(),
            })
        })
        .collect::<coda_core::Result<Vec<_>>>()?;
    Ok(Json(AssignedList {
        reviewer_id: reviewer_id.clone(),
        group_id: assignment.group_id,
        completed: alerts.iter().filter(|a| a.assessment.is_some()).count(),
        total: alerts.len(),
        alerts,
    }))
}

async fn alert_context(State(state): State<Shared>, UrlPath(alert_id): UrlPath<String>) -> Result<Json<AlertContext>, ApiError> {
    let alert = state.store.read().expect("store lock poisoned").alert(&alert_id)?.clone();
    Ok(Json(state.context.context(&alert)?))
}

async fn submit_assessment(State(state): State<Shared>, Json(record): Json<AssessmentRecord>) -> Result<Json<AuditEntry>, ApiError> {
    let mut store = state.store.write().expect("store lock poisoned");
    let entry = store.submit(record, Utc::now())?.clone();
    if (entry.seq + 1) % SNAPSHOT_EVERY == 0 {
        store.snapshot()?;
    }
    Ok(Json(entry))
}

async fn stats(State(state): State<Shared>) -> Result<Json<ReviewStats>, ApiError> {
    Ok(Json(state.store.read().expect("store lock poisoned").stats()?))
}
