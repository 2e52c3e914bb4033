//! JSON-over-HTTP service backing the session console.
//!
//! Every response body, errors included, carries `estimator_variant`.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use infobell::inference::{
    find_plan, plan_grid, DecisionPlan, HypothesisProbs, PlanCell, TailReading, VerdictMode, DEFAULT_N_MAX,
};
use infobell::quantum::{crossing_angle, curve, max_quantum_deficit, violation_fraction, CurvePoint};
use infobell::session::{write_session_csv, AnalysisConfig, OutcomeRow, SessionSummary};
use infobell::store::{SessionRecord, SessionStore};
use infobell::campaign::run_campaign_cancellable;
use infobell::{CampaignConfig, CaseKind, Estimator, SelectionDomain};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

pub const MAX_SIMULATE_EXPERIMENTS: u64 = 100_000;
pub const MAX_SIMULATE_OUTCOMES: usize = 1_000;
pub const MAX_SESSION_OUTCOMES: usize = 10_000;
pub const MAX_CURVE_POINTS: f64 = 1e6;

#[derive(Clone)]
pub struct AppState {
    store: SessionStore,
    jobs: Arc<Semaphore>,
    estimator: Estimator,
}

impl AppState {
    /// `workers` bounds the number of simulations running at once.
    pub fn new(data_dir: &Path, workers: usize, estimator: Estimator) -> infobell::Result<Self> {
        Ok(AppState { store: SessionStore::open(data_dir)?, jobs: Arc::new(Semaphore::new(workers.max(1))), estimator })
    }

    fn variant(&self) -> String {
        self.estimator.variant_name()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/experiments/{k}/outcomes", post(append_outcome))
        .route("/sessions/{id}/summary", get(session_summary))
        .route("/sessions/{id}/export", get(export_session))
        .route("/plan", get(plan))
        .route("/curve", get(curve_endpoint))
        .route("/simulate", get(simulate))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    estimator_variant: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>, variant: String) -> Self {
        ApiError { status, message: message.into(), estimator_variant: variant }
    }

    fn invalid(message: impl Into<String>, variant: String) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message, variant)
    }

    fn from_core(e: infobell::Error, variant: String) -> Self {
        use infobell::Error::*;
        let status = match e {
            NotFound(_) => StatusCode::NOT_FOUND,
            Conflict(_) => StatusCode::CONFLICT,
            Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            Cancelled => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string(), variant)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "estimator_variant": self.estimator_variant });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn default_p0() -> f64 {
    0.012
}
fn default_p1() -> f64 {
    0.85
}
fn default_alpha() -> f64 {
    0.001
}
fn default_gamma() -> f64 {
    0.99
}
fn default_n_max() -> u64 {
    DEFAULT_N_MAX
}

#[derive(Debug, Clone)]
pub struct PlanParams {
    pub p0_h0: f64,
    pub p0_h1: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub n_max: u64,
}

impl PlanParams {
    fn plan(&self) -> infobell::Result<DecisionPlan> {
        // unbounded searches would tie up the request
        if self.n_max > DEFAULT_N_MAX {
            return Err(infobell::Error::Domain(format!("n_max may not exceed {DEFAULT_N_MAX}")));
        }
        find_plan(HypothesisProbs::new(self.p0_h0, self.p0_h1)?, self.alpha, self.gamma, self.n_max)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub n: usize,
    #[serde(default = "default_p0")]
    pub p0_h0: f64,
    #[serde(default = "default_p1")]
    pub p0_h1: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub selection_domain: SelectionDomain,
    /// Same spelling as the CLI flag; the server default when absent.
    pub estimator: Option<String>,
    #[serde(default)]
    pub mode: VerdictMode,
    #[serde(default)]
    pub tail: TailReading,
}

/// Session state plus its summary, flattened.
#[derive(Debug, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub n: usize,
    /// Experiment that accepts the next outcome, 1-based.
    pub open_experiment: u64,
    pub pending_outcomes: usize,
    pub created: u64,
    pub updated: u64,
    #[serde(flatten)]
    pub summary: SessionSummary,
}

fn view(rec: &SessionRecord) -> infobell::Result<SessionView> {
    Ok(SessionView {
        session_id: rec.session_id.clone(),
        n: rec.n,
        open_experiment: rec.open_experiment(),
        pending_outcomes: rec.pending.len(),
        created: rec.created,
        updated: rec.updated,
        summary: rec.summary()?,
    })
}

async fn blocking<T: Send + 'static>(
    variant: String,
    f: impl FnOnce() -> infobell::Result<T> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(|e| ApiError::from_core(e, variant)),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), variant)),
    }
}

async fn create_session(
    State(st): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(req) = body.map_err(|e| ApiError::invalid(e.body_text(), st.variant()))?;
    let estimator = match &req.estimator {
        Some(s) => s.parse().map_err(|e: infobell::Error| ApiError::invalid(e.to_string(), st.variant()))?,
        None => st.estimator,
    };
    let variant = estimator.variant_name();
    if req.n == 0 || req.n > MAX_SESSION_OUTCOMES {
        return Err(ApiError::invalid(format!("n must lie in 1..={MAX_SESSION_OUTCOMES}"), variant));
    }
    let params =
        PlanParams { p0_h0: req.p0_h0, p0_h1: req.p0_h1, alpha: req.alpha, gamma: req.gamma, n_max: req.n_max };
    let config =
        AnalysisConfig { delta: req.delta, selection_domain: req.selection_domain, estimator, mode: req.mode, tail: req.tail };
    let store = st.store.clone();
    let n = req.n;
    let v = blocking(variant, move || view(&store.create(n, params.plan()?, config)?)).await?;
    Ok((StatusCode::CREATED, Json(v)))
}

async fn append_outcome(
    State(st): State<AppState>,
    UrlPath((id, k)): UrlPath<(String, String)>,
    body: Result<Json<OutcomeRow>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    // the session's own variant is not known until it is loaded
    let Json(row) = body.map_err(|e| ApiError::invalid(e.body_text(), st.variant()))?;
    let k: u64 = k.parse().map_err(|_| ApiError::invalid(format!("bad experiment number '{k}'"), st.variant()))?;
    let store = st.store.clone();
    let rec = match store.load(&id) {
        Ok(rec) => rec,
        Err(e) => return Err(ApiError::from_core(e, st.variant())),
    };
    let variant = rec.config.estimator.variant_name();
    let v = blocking(variant, move || view(&store.append_outcome(&id, k, row)?)).await?;
    Ok((StatusCode::CREATED, Json(v)))
}

async fn session_summary(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionView>> {
    let store = st.store.clone();
    blocking(st.variant(), move || view(&store.load(&id)?)).await.map(Json)
}

/// Complete experiments as a session CSV, the input format of `analyze`.
async fn export_session(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let store = st.store.clone();
    let (csv, variant) = blocking(st.variant(), move || {
        let rec = store.load(&id)?;
        let mut buf = Vec::new();
        write_session_csv(&rec.experiments, &mut buf)?;
        Ok((buf, rec.config.estimator.variant_name()))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()), ("x-estimator-variant".parse().unwrap(), variant)], csv)
        .into_response())
}

// spelled out rather than flattened: flattening loses the typed query parsing
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanQuery {
    #[serde(default = "default_p0")]
    pub p0_h0: f64,
    #[serde(default = "default_p1")]
    pub p0_h1: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    /// The full alpha by gamma grid instead of a single plan.
    #[serde(default)]
    pub table: bool,
}

impl PlanQuery {
    fn params(&self) -> PlanParams {
        PlanParams { p0_h0: self.p0_h0, p0_h1: self.p0_h1, alpha: self.alpha, gamma: self.gamma, n_max: self.n_max }
    }
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum PlanResponse {
    Single {
        estimator_variant: String,
        #[serde(flatten)]
        plan: DecisionPlan,
    },
    Table {
        estimator_variant: String,
        cells: Vec<PlanCell>,
    },
}

async fn plan(State(st): State<AppState>, q: Result<Query<PlanQuery>, QueryRejection>) -> ApiResult<Json<PlanResponse>> {
    let variant = st.variant();
    let Query(q) = q.map_err(|e| ApiError::invalid(e.body_text(), variant.clone()))?;
    let v = variant.clone();
    blocking(variant, move || {
        if q.table {
            let probs = HypothesisProbs::new(q.p0_h0, q.p0_h1)?;
            let cells = plan_grid(probs, &[5.0, 1.0, 0.5, 0.1], &[80.0, 90.0, 95.0, 99.0], q.n_max.min(DEFAULT_N_MAX))?;
            Ok(PlanResponse::Table { estimator_variant: v, cells })
        } else {
            Ok(PlanResponse::Single { estimator_variant: v, plan: q.params().plan()? })
        }
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveQuery {
    #[serde(default)]
    pub min: f64,
    #[serde(default = "default_curve_max")]
    pub max: f64,
    #[serde(default = "default_curve_step")]
    pub step: f64,
    /// Include the sampled points.
    #[serde(default)]
    pub points: bool,
}

fn default_curve_max() -> f64 {
    180.0
}
fn default_curve_step() -> f64 {
    0.01
}

#[derive(Debug, Serialize)]
pub struct CurveResponse {
    pub estimator_variant: String,
    pub theta_min: f64,
    pub theta_max: f64,
    pub step: f64,
    pub violation_fraction: f64,
    pub crossing_angle: f64,
    pub maximum: CurvePoint,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<CurvePoint>>,
}

async fn curve_endpoint(
    State(st): State<AppState>,
    q: Result<Query<CurveQuery>, QueryRejection>,
) -> ApiResult<Json<CurveResponse>> {
    let variant = st.variant();
    let Query(q) = q.map_err(|e| ApiError::invalid(e.body_text(), variant.clone()))?;
    if !(q.step > 0.0) || (q.max - q.min) / q.step > MAX_CURVE_POINTS {
        return Err(ApiError::invalid(format!("step must be positive and give at most {MAX_CURVE_POINTS} points"), variant));
    }
    let v = variant.clone();
    blocking(variant, move || {
        Ok(CurveResponse {
            estimator_variant: v,
            theta_min: q.min,
            theta_max: q.max,
            step: q.step,
            violation_fraction: violation_fraction(q.min, q.max, q.step)?,
            crossing_angle: crossing_angle(1e-10)?,
            maximum: max_quantum_deficit(),
            points: if q.points { Some(curve(q.min, q.max, q.step)?) } else { None },
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateQuery {
    #[serde(default = "default_case")]
    pub case: String,
    #[serde(default = "default_outcomes")]
    pub outcomes: usize,
    #[serde(default = "default_experiments")]
    pub experiments: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub selection: SelectionDomain,
    #[serde(default)]
    pub delta: f64,
    pub estimator: Option<String>,
}

fn default_case() -> String {
    "stochastic".into()
}
fn default_outcomes() -> usize {
    12
}
fn default_experiments() -> u64 {
    10_000
}

/// Raises the flag when dropped, so an abandoned request stops its campaign.
struct CancelOnDrop(Arc<AtomicBool>);

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        self.0.store(true, Ordering::Relaxed);
    }
}

async fn simulate(
    State(st): State<AppState>,
    q: Result<Query<SimulateQuery>, QueryRejection>,
) -> ApiResult<Json<infobell::CampaignReport>> {
    let variant = st.variant();
    let Query(q) = q.map_err(|e| ApiError::invalid(e.body_text(), variant.clone()))?;
    let estimator = match &q.estimator {
        Some(s) => s.parse().map_err(|e: infobell::Error| ApiError::invalid(e.to_string(), variant.clone()))?,
        None => st.estimator,
    };
    let variant = estimator.variant_name();
    let case: CaseKind = q.case.parse().map_err(|e: infobell::Error| ApiError::invalid(e.to_string(), variant.clone()))?;
    if q.experiments > MAX_SIMULATE_EXPERIMENTS {
        return Err(ApiError::invalid(format!("experiments may not exceed {MAX_SIMULATE_EXPERIMENTS}"), variant));
    }
    if q.outcomes > MAX_SIMULATE_OUTCOMES {
        return Err(ApiError::invalid(format!("outcomes may not exceed {MAX_SIMULATE_OUTCOMES}"), variant));
    }
    let config = CampaignConfig {
        case,
        n: q.outcomes,
        experiments: q.experiments,
        master_seed: q.seed,
        domain: q.selection,
        delta: q.delta,
        estimator,
    };
    config.validate().map_err(|e| ApiError::from_core(e, variant.clone()))?;
    let _permit = st
        .jobs
        .clone()
        .acquire_owned()
        .await
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string(), variant.clone()))?;
    let cancel = Arc::new(AtomicBool::new(false));
    let _guard = CancelOnDrop(cancel.clone());
    blocking(variant, move || run_campaign_cancellable(&config, &cancel)).await.map(Json)
}
