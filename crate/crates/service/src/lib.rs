//! HTTP interface to the quadforge pipeline. A project holds one input mesh;
//! each of the four stages is triggered separately, runs in the background
//! and is polled through the status resource.
//!
//! Routes:
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/projects` | create from `{mesh, pattern?, config?}` |
//! | GET | `/projects/{id}/status` | per-stage state |
//! | POST | `/projects/{id}/stages/{n}/run` | trigger stage `n` (add `?wait=true` to block) |
//! | PATCH | `/projects/{id}/pattern` | replace or edit the pattern |
//! | GET | `/projects/{id}/artifacts/{name}` | `pattern`, `field`, `layout`, `mesh`, `quality` |
//! | GET | `/projects/{id}/artifacts/svg/{name}` | `layout` or `mesh` |

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use quadforge_core::layout::LayoutResult;
use quadforge_core::mesh::TriMesh;
use quadforge_core::msh::MshFile;
use quadforge_core::pipeline::{self, FieldStage, PatternStage, PipelineConfig, PipelineError};
use quadforge_core::quadmesh::to_msh;
use quadforge_core::singularity::{apply_edit, finalize, EditKind, PatternEdit, SingularityError, SingularityPattern};
use quadforge_core::svg;

pub const STAGE_NAMES: [&str; 4] = ["pattern", "field", "layout", "mesh"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageState {
    Missing,
    Running,
    Done,
    Stale,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageStatus {
    pub stage: usize,
    pub name: &'static str,
    pub state: StageState,
    pub millis: Option<f64>,
    pub error: Option<Value>,
}

/// Text artifact with its media type.
#[derive(Debug, Clone)]
struct Artifact {
    content_type: &'static str,
    body: String,
}

impl Artifact {
    fn json(body: String) -> Self {
        Self { content_type: "application/json", body }
    }
}

/// In-memory result of a stage, kept so downstream stages can start from it.
#[derive(Clone)]
enum Product {
    Pattern(Arc<PatternStage>),
    Field(Arc<FieldStage>),
    Layout(Arc<LayoutResult>),
    Mesh,
}

struct Slot {
    state: StageState,
    millis: Option<f64>,
    error: Option<Value>,
    product: Option<Product>,
    artifacts: BTreeMap<&'static str, Artifact>,
}

impl Slot {
    fn empty() -> Self {
        Self { state: StageState::Missing, millis: None, error: None, product: None, artifacts: BTreeMap::new() }
    }
}

struct Project {
    mesh: Arc<TriMesh>,
    config: PipelineConfig,
    /// Pattern supplied at creation or by an edit; stage 1 detects one otherwise.
    pattern: Option<SingularityPattern>,
    slots: [Slot; 4],
    running: Option<usize>,
}

impl Project {
    fn status(&self, id: &str) -> Value {
        let stages: Vec<StageStatus> = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| StageStatus { stage: i + 1, name: STAGE_NAMES[i], state: s.state, millis: s.millis, error: s.error.clone() })
            .collect();
        json!({ "id": id, "running": self.running, "stages": stages })
    }

    /// Marks every completed stage after `stage` (1-based) as stale.
    fn invalidate_after(&mut self, stage: usize) {
        for s in &mut self.slots[stage..] {
            if matches!(s.state, StageState::Done | StageState::Failed) {
                s.state = StageState::Stale;
                s.product = None;
                s.artifacts.clear();
            }
        }
    }
}

#[derive(Default)]
struct Inner {
    next_id: u64,
    projects: HashMap<String, Project>,
}

#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Mutex<Inner>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// JSON error response.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": message.into() }) }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn pattern_error(e: SingularityError) -> ApiError {
    match e {
        SingularityError::Invalid(report) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "pattern violates the index balance")
                .with("deficit", json!(report.deficit))
                .with("deficit_quarters", json!(report.deficit_quarters))
                .with("report", json!(report))
        }
        other => ApiError::new(StatusCode::BAD_REQUEST, other.to_string()),
    }
}

fn failure_body(stage: usize, e: &PipelineError) -> Value {
    let mut v = e.to_json();
    v["stage_number"] = json!(stage);
    v
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(status))
        .route("/projects/{id}/status", get(status))
        .route("/projects/{id}/stages/{n}/run", post(run_stage))
        .route("/projects/{id}/pattern", patch(edit_pattern))
        .route("/projects/{id}/artifacts/{name}", get(artifact))
        .route("/projects/{id}/artifacts/svg/{name}", get(svg_artifact))
        .layer(DefaultBodyLimit::max(256 << 20))
        .with_state(state)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateProject {
    /// `.msh` 2.2 text of the input triangulation.
    pub mesh: String,
    #[serde(default)]
    pub pattern: Option<Value>,
    #[serde(default)]
    pub config: Option<Value>,
}

async fn create_project(State(app): State<AppState>, Json(req): Json<CreateProject>) -> Result<impl IntoResponse, ApiError> {
    let file = MshFile::parse(&req.mesh).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("mesh: {e}")))?;
    let (mesh, _) = file.to_trimesh().map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("mesh: {e}")))?;
    let config = match req.config {
        Some(v) => PipelineConfig::from_json(&v.to_string()).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if config.mesh.is_some() || config.pattern.is_some() || config.out.is_some() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "config may not name files; upload them instead"));
    }
    let pattern = match req.pattern {
        Some(v) => {
            let p = SingularityPattern::from_json(&v.to_string()).map_err(pattern_error)?;
            finalize(&p, &mesh).map_err(pattern_error)?;
            Some(p)
        }
        None => None,
    };
    let mut inner = app.inner.lock().unwrap();
    inner.next_id += 1;
    let id = inner.next_id.to_string();
    let project = Project { mesh: Arc::new(mesh), config, pattern, slots: std::array::from_fn(|_| Slot::empty()), running: None };
    let body = project.status(&id);
    inner.projects.insert(id, project);
    Ok((StatusCode::CREATED, Json(body)))
}

async fn status(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let inner = app.inner.lock().unwrap();
    let p = inner.projects.get(&id).ok_or_else(|| ApiError::not_found(format!("project {id}")))?;
    Ok(Json(p.status(&id)))
}

#[derive(Deserialize, Default)]
struct RunQuery {
    #[serde(default)]
    wait: bool,
}

struct Job {
    stage: usize,
    mesh: Arc<TriMesh>,
    config: PipelineConfig,
    pattern: Option<SingularityPattern>,
    upstream: Option<Product>,
    field: Option<Arc<FieldStage>>,
}

/// Runs one stage and renders its artifacts.
fn execute(job: Job) -> Result<(Product, BTreeMap<&'static str, Artifact>), PipelineError> {
    let mut art = BTreeMap::new();
    let product = match (job.stage, job.upstream) {
        (1, _) => {
            let p = pipeline::pattern_stage(&job.mesh, job.pattern, &job.config)?;
            art.insert("pattern", Artifact::json(pipeline::pattern_json(&p.pattern)));
            Product::Pattern(Arc::new(p))
        }
        (2, Some(Product::Pattern(p))) => {
            let f = pipeline::field_stage(&job.mesh, &p.pattern, &job.config)?;
            art.insert("field", Artifact::json(pipeline::field_json(&f)));
            Product::Field(Arc::new(f))
        }
        (3, Some(Product::Field(f))) => {
            let l = pipeline::layout_stage(&f, &job.config)?;
            art.insert("layout", Artifact::json(pipeline::layout_json(&l)));
            art.insert("svg/layout", Artifact { content_type: "image/svg+xml", body: svg::render_layout(&job.mesh, &l.layout, &l.pattern) });
            Product::Layout(Arc::new(l))
        }
        (4, Some(Product::Layout(l))) => {
            let f = job.field.expect("field kept while layout is current");
            let q = pipeline::mesh_stage(&f, &l, &job.config)?;
            let msh = to_msh(&q.mesh).map_err(|e| PipelineError::Stage { stage: pipeline::Stage::Mesh, message: e.to_string() })?;
            art.insert("mesh", Artifact { content_type: "text/plain", body: msh.to_text() });
            art.insert("quality", Artifact::json(pipeline::quality_json(&f, &q)));
            art.insert("svg/mesh", Artifact { content_type: "image/svg+xml", body: svg::render_mesh(&job.mesh, &q.mesh, &l.pattern) });
            Product::Mesh
        }
        _ => unreachable!("upstream product checked before dispatch"),
    };
    Ok((product, art))
}

async fn run_stage(
    State(app): State<AppState>,
    Path((id, n)): Path<(String, usize)>,
    Query(q): Query<RunQuery>,
) -> Result<Response, ApiError> {
    if !(1..=4).contains(&n) {
        return Err(ApiError::not_found(format!("stage {n}")));
    }
    let job = {
        let mut inner = app.inner.lock().unwrap();
        let p = inner.projects.get_mut(&id).ok_or_else(|| ApiError::not_found(format!("project {id}")))?;
        if let Some(r) = p.running {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("stage {r} is already running")).with("running", json!(r)));
        }
        let upstream = if n > 1 {
            let prev = &p.slots[n - 2];
            if prev.state != StageState::Done {
                return Err(ApiError::new(StatusCode::CONFLICT, format!("stage {} must be computed first", n - 1))
                    .with("upstream_state", json!(prev.state)));
            }
            prev.product.clone()
        } else {
            None
        };
        let field = match &p.slots[1].product {
            Some(Product::Field(f)) => Some(f.clone()),
            _ => None,
        };
        p.running = Some(n);
        p.slots[n - 1].state = StageState::Running;
        Job { stage: n, mesh: p.mesh.clone(), config: p.config.clone(), pattern: p.pattern.clone(), upstream, field }
    };

    let task_app = app.clone();
    let task_id = id.clone();
    let handle = tokio::task::spawn_blocking(move || {
        let t0 = Instant::now();
        let result = execute(job);
        let millis = t0.elapsed().as_secs_f64() * 1e3;
        let mut inner = task_app.inner.lock().unwrap();
        let Some(p) = inner.projects.get_mut(&task_id) else { return };
        p.running = None;
        p.invalidate_after(n);
        let slot = &mut p.slots[n - 1];
        slot.millis = Some(millis);
        match result {
            Ok((product, artifacts)) => {
                slot.state = StageState::Done;
                slot.error = None;
                slot.product = Some(product);
                slot.artifacts = artifacts;
            }
            Err(e) => {
                log::warn!("project {task_id} stage {n}: {e}");
                slot.state = StageState::Failed;
                slot.error = Some(failure_body(n, &e));
                slot.product = None;
                slot.artifacts.clear();
            }
        }
    });

    if !q.wait {
        return Ok((StatusCode::ACCEPTED, Json(json!({ "stage": n, "state": StageState::Running }))).into_response());
    }
    handle.await.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let inner = app.inner.lock().unwrap();
    let p = inner.projects.get(&id).ok_or_else(|| ApiError::not_found(format!("project {id}")))?;
    let slot = &p.slots[n - 1];
    match slot.state {
        StageState::Failed => {
            let body = slot.error.clone().unwrap_or(Value::Null);
            Ok((StatusCode::INTERNAL_SERVER_ERROR, Json(body)).into_response())
        }
        _ => Ok(Json(p.status(&id)).into_response()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternPatch {
    /// Full replacement pattern.
    #[serde(default)]
    pub pattern: Option<Value>,
    /// Edits applied in order to the current pattern.
    #[serde(default)]
    pub edits: Vec<EditKind>,
}

async fn edit_pattern(State(app): State<AppState>, Path(id): Path<String>, Json(req): Json<PatternPatch>) -> Result<Json<Value>, ApiError> {
    let mut inner = app.inner.lock().unwrap();
    let p = inner.projects.get_mut(&id).ok_or_else(|| ApiError::not_found(format!("project {id}")))?;
    if let Some(r) = p.running {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("stage {r} is running")));
    }
    let mut pattern = match (&req.pattern, &p.slots[0].product, &p.pattern) {
        (Some(v), _, _) => SingularityPattern::from_json(&v.to_string()).map_err(pattern_error)?,
        (None, Some(Product::Pattern(s)), _) => s.pattern.clone(),
        (None, _, Some(current)) => current.clone(),
        (None, _, None) => SingularityPattern::empty(&p.mesh),
    };
    if req.pattern.is_none() && req.edits.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "nothing to apply"));
    }
    for kind in &req.edits {
        pattern = apply_edit(&pattern, &PatternEdit::staged(kind.clone()), &p.mesh).map_err(pattern_error)?.0;
    }
    let validation = finalize(&pattern, &p.mesh).map_err(pattern_error)?;
    p.pattern = Some(pattern.clone());
    p.invalidate_after(1);
    let body = pipeline::pattern_json(&pattern);
    let stage = PatternStage { pattern, detected: false, mbo_converged: None, validation: validation.clone() };
    let slot = &mut p.slots[0];
    slot.state = StageState::Done;
    slot.error = None;
    slot.millis = None;
    slot.product = Some(Product::Pattern(Arc::new(stage)));
    slot.artifacts = BTreeMap::from([("pattern", Artifact::json(body))]);
    Ok(Json(json!({ "validation": validation, "status": p.status(&id) })))
}

fn stage_of(name: &str) -> Option<usize> {
    Some(match name {
        "pattern" => 1,
        "field" => 2,
        "layout" | "svg/layout" => 3,
        "mesh" | "quality" | "svg/mesh" => 4,
        _ => return None,
    })
}

fn fetch(app: &AppState, id: &str, name: &str) -> Result<Response, ApiError> {
    let stage = stage_of(name).ok_or_else(|| ApiError::not_found(format!("artifact {name}")))?;
    let inner = app.inner.lock().unwrap();
    let p = inner.projects.get(id).ok_or_else(|| ApiError::not_found(format!("project {id}")))?;
    let slot = &p.slots[stage - 1];
    match slot.state {
        StageState::Done => {
            let a = slot.artifacts.get(name).ok_or_else(|| ApiError::not_found(format!("artifact {name}")))?;
            Ok(([(header::CONTENT_TYPE, a.content_type)], a.body.clone()).into_response())
        }
        StageState::Stale => Err(ApiError::new(StatusCode::CONFLICT, "stale, recompute required").with("stage", json!(stage))),
        StageState::Running => Err(ApiError::new(StatusCode::CONFLICT, format!("stage {stage} is running")).with("stage", json!(stage))),
        StageState::Failed => Err(ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, body: slot.error.clone().unwrap_or(Value::Null) }),
        StageState::Missing => Err(ApiError::new(StatusCode::NOT_FOUND, format!("stage {stage} has not been run")).with("stage", json!(stage))),
    }
}

async fn artifact(State(app): State<AppState>, Path((id, name)): Path<(String, String)>) -> Result<Response, ApiError> {
    fetch(&app, &id, &name)
}

async fn svg_artifact(State(app): State<AppState>, Path((id, name)): Path<(String, String)>) -> Result<Response, ApiError> {
    fetch(&app, &id, &format!("svg/{name}"))
}

/// Serves on `addr` until the process is stopped.
pub async fn serve(addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new())).await
}

/// Blocking wrapper around [`serve`] for callers without a runtime.
pub fn serve_blocking(addr: &str) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(addr))
}
