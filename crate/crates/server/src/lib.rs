//! JSON-over-HTTP access to prediction, simulation and layout search.
//!
//! Prediction is synchronous. Simulation and optimisation are queued as
//! jobs and run one at a time on a blocking worker; clients poll
//! `/api/jobs/{id}` and fetch `/api/results/{id}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::mpsc;

use sunhours::formats::{SceneDocument, Strictness};
use sunhours::mlp::SurrogateModel;
use sunhours::optimizer::{ga_optimize_with, Evaluator, GaConfig, GenerationRecord, Lattice, LayoutProblem};
use sunhours::oracle::sunlight_hours_sc;
use sunhours::site::{check_compliance, predict_site};
use sunhours::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Simulate,
    Predict,
    Optimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: u64,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: f64,
    /// Where the result can be fetched once the job is done.
    pub result: Option<String>,
    pub error: Option<String>,
    /// Latest generation of an optimisation.
    pub latest: Option<GenerationRecord>,
}

/// Body of `POST /api/optimize`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeRequest {
    #[serde(default)]
    pub ga: Option<GaConfig>,
    #[serde(default)]
    pub lattice: Option<Lattice>,
    /// `surrogate` (default) or `oracle`.
    #[serde(default)]
    pub evaluator: Option<String>,
    #[serde(default)]
    pub delta_t_min: Option<f64>,
}

enum Job {
    Simulate { id: u64, doc: SceneDocument, delta_t_min: f64 },
    Optimize { id: u64, doc: SceneDocument, req: OptimizeRequest },
}

#[derive(Default)]
struct Jobs {
    next_id: u64,
    records: HashMap<u64, JobRecord>,
    results: HashMap<u64, Value>,
    optimize_active: bool,
}

struct Inner {
    model: Option<SurrogateModel>,
    scene: RwLock<Option<(SceneDocument, u64)>>,
    jobs: Mutex<Jobs>,
    queue: mpsc::UnboundedSender<Job>,
}

/// Shared service state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Starts the job worker on the current tokio runtime.
    pub fn new(model: Option<SurrogateModel>, scene: Option<SceneDocument>) -> Self {
        let (tx, rx) = mpsc::unbounded_channel();
        let inner = Arc::new(Inner {
            model,
            scene: RwLock::new(scene.map(|s| (s, 1))),
            jobs: Mutex::new(Jobs::default()),
            queue: tx,
        });
        tokio::spawn(worker(Arc::clone(&inner), rx));
        Self { inner }
    }
}

async fn worker(inner: Arc<Inner>, mut rx: mpsc::UnboundedReceiver<Job>) {
    while let Some(job) = rx.recv().await {
        let id = match &job {
            Job::Simulate { id, .. } | Job::Optimize { id, .. } => *id,
        };
        update(&inner, id, |r| r.state = JobState::Running);
        let shared = Arc::clone(&inner);
        let outcome = tokio::task::spawn_blocking(move || run_job(&shared, job))
            .await
            .unwrap_or_else(|e| Err(format!("job panicked: {e}")));
        let mut jobs = inner.jobs.lock().expect("jobs lock");
        if jobs.records.get(&id).is_some_and(|r| r.kind == JobKind::Optimize) {
            jobs.optimize_active = false;
        }
        match outcome {
            Ok(v) => {
                jobs.results.insert(id, v);
                if let Some(r) = jobs.records.get_mut(&id) {
                    r.state = JobState::Done;
                    r.progress = 1.0;
                    r.result = Some(format!("/api/results/{id}"));
                }
            }
            Err(e) => {
                if let Some(r) = jobs.records.get_mut(&id) {
                    r.state = JobState::Failed;
                    r.error = Some(e);
                }
            }
        }
    }
}

fn update(inner: &Inner, id: u64, f: impl FnOnce(&mut JobRecord)) {
    if let Some(r) = inner.jobs.lock().expect("jobs lock").records.get_mut(&id) {
        f(r);
    }
}

fn run_job(inner: &Inner, job: Job) -> Result<Value, String> {
    match job {
        Job::Simulate { doc, delta_t_min, .. } => {
            let scene = doc.scene();
            let heatmap = sunlight_hours_sc(&scene, &doc.grid, delta_t_min).map_err(|e| e.to_string())?;
            let compliance = check_compliance(&heatmap, &scene);
            Ok(json!({ "heatmap": heatmap, "compliance": compliance }))
        }
        Job::Optimize { id, doc, req } => {
            let (scene, northern) = doc.layout_base();
            let delta_t_min = req.delta_t_min.unwrap_or(1.0);
            let evaluator = match req.evaluator.as_deref().unwrap_or("surrogate") {
                "oracle" => Evaluator::Oracle { delta_t_min },
                _ => Evaluator::Surrogate(inner.model.as_ref().ok_or("no model loaded")?),
            };
            let problem = LayoutProblem {
                scene,
                grid: doc.grid,
                northern,
                evaluator,
            };
            let lattice = req.lattice.unwrap_or_default();
            let ga = req.ga.unwrap_or_default();
            let outcome = ga_optimize_with(
                &lattice,
                &ga,
                |d| problem.objective(d).map(|o| o.objective),
                |g| {
                    update(inner, id, |r| {
                        r.progress = (g.generation + 1) as f64 / ga.generations as f64;
                        r.latest = Some(g.clone());
                    })
                },
            )
            .map_err(|e| e.to_string())?;
            let breakdown = problem.objective(&outcome.best).map_err(|e| e.to_string())?;
            Ok(json!({
                "evaluator": evaluator.name(),
                "ga": ga,
                "best": outcome.best,
                "best_score": outcome.best_score,
                "objective": breakdown,
                "history": outcome.history,
                "evaluations": outcome.evaluations,
            }))
        }
    }
}

/// An error response with a JSON body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            field: None,
        }
    }

    /// Schema problems are 400; documents that parse but break invariants are 422.
    fn from_core(e: Error, schema_stage: bool) -> Self {
        let field = match &e {
            Error::InvalidField { field, .. } => Some(field.clone()),
            _ => None,
        };
        let status = match (&e, schema_stage) {
            (Error::Json(_) | Error::Version { .. } | Error::Corrupt(_), _) | (_, true) => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self {
            status,
            message: e.to_string(),
            field,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(f) = self.field {
            body["field"] = f.into();
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/scene", get(get_scene).put(put_scene))
        .route("/api/predict", post(predict))
        .route("/api/simulate", post(simulate))
        .route("/api/optimize", post(optimize))
        .route("/api/jobs/{id}", get(job))
        .route("/api/results/{id}", get(result))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn health(State(s): State<AppState>) -> Json<Value> {
    let version = s.inner.scene.read().expect("scene lock").as_ref().map(|(_, v)| *v);
    Json(json!({
        "status": "ok",
        "model": s.inner.model.as_ref().map(|m| &m.metadata),
        "scene_version": version,
    }))
}

fn parse_scene(text: &str) -> ApiResult<SceneDocument> {
    let doc = SceneDocument::parse_schema(text, Strictness::Strict).map_err(|e| ApiError::from_core(e, true))?;
    doc.validate().map_err(|e| ApiError::from_core(e, false))?;
    Ok(doc)
}

fn scene_response(doc: &SceneDocument, version: u64) -> Json<Value> {
    Json(json!({ "version": version, "scene": doc }))
}

async fn get_scene(State(s): State<AppState>) -> ApiResult<Json<Value>> {
    let guard = s.inner.scene.read().expect("scene lock");
    let (doc, v) = guard
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no scene has been stored"))?;
    Ok(scene_response(doc, *v))
}

async fn put_scene(State(s): State<AppState>, body: String) -> ApiResult<Json<Value>> {
    let doc = parse_scene(&body)?;
    let mut guard = s.inner.scene.write().expect("scene lock");
    let version = guard.as_ref().map_or(1, |(_, v)| v + 1);
    *guard = Some((doc, version));
    let (doc, v) = guard.as_ref().expect("just stored");
    Ok(scene_response(doc, *v))
}

fn parse_body(body: &str) -> ApiResult<serde_json::Map<String, Value>> {
    if body.trim().is_empty() {
        return Ok(Default::default());
    }
    match serde_json::from_str(body) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ApiError::new(StatusCode::BAD_REQUEST, "body must be a JSON object")),
        Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, e.to_string())),
    }
}

fn reject_unknown(body: &serde_json::Map<String, Value>, known: &[&str]) -> ApiResult<()> {
    match body.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            message: format!("unknown field `{k}`"),
            field: Some(k.clone()),
        }),
        None => Ok(()),
    }
}

/// The request's scene, or the stored one.
fn scene_from(s: &AppState, body: &serde_json::Map<String, Value>) -> ApiResult<SceneDocument> {
    match body.get("scene") {
        Some(v) => parse_scene(&v.to_string()),
        None => s
            .inner
            .scene
            .read()
            .expect("scene lock")
            .as_ref()
            .map(|(d, _)| d.clone())
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "no scene in the request and none stored")),
    }
}

async fn predict(State(s): State<AppState>, body: String) -> ApiResult<Json<Value>> {
    let body = parse_body(&body)?;
    reject_unknown(&body, &["scene"])?;
    let model = s
        .inner
        .model
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))?;
    let doc = scene_from(&s, &body)?;
    let scene = doc.scene();
    let heatmap = predict_site(model, &scene, &doc.grid).map_err(|e| ApiError::from_core(e, false))?;
    let compliance = check_compliance(&heatmap, &scene);
    Ok(Json(json!({ "heatmap": heatmap, "compliance": compliance })))
}

fn enqueue(s: &AppState, kind: JobKind, make: impl FnOnce(u64) -> Job) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let mut jobs = s.inner.jobs.lock().expect("jobs lock");
    if kind == JobKind::Optimize {
        if jobs.optimize_active {
            return Err(ApiError::new(StatusCode::CONFLICT, "an optimisation is already queued or running"));
        }
        jobs.optimize_active = true;
    }
    jobs.next_id += 1;
    let id = jobs.next_id;
    let record = JobRecord {
        id,
        kind,
        state: JobState::Queued,
        progress: 0.0,
        result: None,
        error: None,
        latest: None,
    };
    jobs.records.insert(id, record.clone());
    s.inner
        .queue
        .send(make(id))
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "job worker stopped"))?;
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn simulate(State(s): State<AppState>, body: String) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let body = parse_body(&body)?;
    reject_unknown(&body, &["scene", "delta_t_min"])?;
    let delta_t_min = match body.get("delta_t_min") {
        None => 1.0,
        Some(v) => v
            .as_f64()
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "delta_t_min must be a number"))?,
    };
    if !(1.0..=5.0).contains(&delta_t_min) {
        return Err(ApiError::from_core(Error::InvalidTimeStep(delta_t_min), false));
    }
    let doc = scene_from(&s, &body)?;
    enqueue(&s, JobKind::Simulate, |id| Job::Simulate { id, doc, delta_t_min })
}

async fn optimize(State(s): State<AppState>, body: String) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let body = parse_body(&body)?;
    reject_unknown(&body, &["config"])?;
    let req: OptimizeRequest = match body.get("config") {
        None => OptimizeRequest::default(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?,
    };
    match req.evaluator.as_deref() {
        None | Some("surrogate") if s.inner.model.is_none() => {
            return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"));
        }
        None | Some("surrogate") | Some("oracle") => {}
        Some(other) => {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown evaluator `{other}`")));
        }
    }
    if let Some(ga) = &req.ga {
        ga.validate().map_err(|e| ApiError::from_core(e, false))?;
    }
    if let Some(l) = &req.lattice {
        l.validate().map_err(|e| ApiError::from_core(e, false))?;
    }
    if let Some(d) = req.delta_t_min {
        if !(1.0..=5.0).contains(&d) {
            return Err(ApiError::from_core(Error::InvalidTimeStep(d), false));
        }
    }
    let doc = scene_from(&s, &serde_json::Map::new())?;
    enqueue(&s, JobKind::Optimize, |id| Job::Optimize { id, doc, req })
}

async fn job(State(s): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<JobRecord>> {
    s.inner
        .jobs
        .lock()
        .expect("jobs lock")
        .records
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no job {id}")))
}

async fn result(State(s): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<Value>> {
    let jobs = s.inner.jobs.lock().expect("jobs lock");
    match (jobs.records.get(&id), jobs.results.get(&id)) {
        (_, Some(v)) => Ok(Json(v.clone())),
        (Some(r), None) => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("job {id} has no result ({:?})", r.state),
        )),
        (None, None) => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no job {id}"))),
    }
}
